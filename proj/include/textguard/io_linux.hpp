#pragma once

// Real backends: evdev for capture, uinput for synthetic typing, xclip for
// the PRIMARY selection. Needs read access to /dev/input/event* and write
// access to /dev/uinput (root or the input group).

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "textguard/io.hpp"

namespace textguard::io::linux_input {

/// Key name for a Linux keycode (KEY_A -> "a"), nullopt if unmapped.
std::optional<std::string> name_for_keycode(int keycode);
std::optional<int> keycode_for_name(std::string_view name);

struct Stroke {
  int keycode = 0;
  bool shift = false;
};
/// US layout. nullopt for characters the layout cannot type.
std::optional<Stroke> stroke_for_char(std::string_view ch);

/// /dev/input/event* nodes that report letter keys.
std::vector<std::string> find_keyboards();

/// Reads one keyboard. Passive until acquire(), which grabs the device so
/// no other reader sees the keys.
class EvdevKeyboard : public InputCapture {
 public:
  using Handler = std::function<void(const KeyEvent&)>;
  /// Throws CaptureDenied if the device cannot be opened.
  EvdevKeyboard(const std::string& path, Handler on_event);
  ~EvdevKeyboard() override;

  void acquire() override;
  void release() override;
  bool held() const override { return held_; }

 private:
  void read_loop();
  int fd_ = -1;
  Handler on_event_;
  Modifiers mods_;
  std::atomic<bool> held_{false};
  std::atomic<bool> running_{true};
  std::thread reader_;
};

class UinputSink : public OutputSink {
 public:
  /// Throws CaptureDenied if /dev/uinput is unavailable.
  explicit UinputSink(TimingPolicy timing = {});
  ~UinputSink() override;

  void type_text(std::string_view text) override;
  void backspace(std::size_t count) override;
  void forward(const KeyEvent& chord) override;

 private:
  void tap(int keycode, bool shift, bool ctrl = false, bool alt = false);
  void emit(int type, int code, int value);
  int fd_ = -1;
  TimingPolicy timing_;
};

class XclipSelection : public SelectionProvider {
 public:
  std::string selection() override;
};

}  // namespace textguard::io::linux_input
