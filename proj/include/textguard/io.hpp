#pragma once

// The boundary between the interceptor and the operating system.
//
// Key identifiers are strings: a single printable UTF-8 character ("a", "7",
// "é", "+") or a named key ("space", "enter", "tab", "backspace", "escape",
// "left", "right", "up", "down", "home", "end", "delete", "f1".."f12", and the
// modifier keys "ctrl", "alt", "shift"). Letters are lower case; Shift is
// carried in the modifier set.
//
// Simulated event script (JSON Lines):
//   {"t_us": 120000, "key": "h", "action": "down", "mods": []}
//   {"t_us": 125000, "key": "e", "action": "down", "mods": ["ctrl", "alt"]}

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace textguard::io {

enum class KeyAction { Down, Up };

struct Modifiers {
  bool ctrl = false;
  bool alt = false;
  bool shift = false;
  friend bool operator==(const Modifiers&, const Modifiers&) = default;
};

struct KeyEvent {
  std::int64_t timestamp_us = 0;
  std::string code;
  KeyAction action = KeyAction::Down;
  Modifiers mods;
  friend bool operator==(const KeyEvent&, const KeyEvent&) = default;
};

/// "ctrl+alt+e", "ctrl+c", "left", "a".
std::string chord_name(const KeyEvent& ev);
/// Parses "ctrl+alt+e" style chords into a key-down event at time 0.
/// Throws BadRequest.
KeyEvent parse_chord(std::string_view chord);

bool is_modifier_key(std::string_view code);
/// The text a key-down produces in a plain textbox (Shift applied, US layout
/// for ASCII punctuation), or nullopt for non-text keys and any Ctrl/Alt
/// chord. "enter" gives "\n", "space" gives " ", "tab" gives "\t".
std::optional<std::string> key_text(const KeyEvent& ev);

/// Key-down/up pairs typing `text`, `gap_us` apart, starting at `t0_us`.
/// Upper-case ASCII letters and shifted punctuation get the Shift modifier.
std::vector<KeyEvent> events_for_text(std::string_view text, std::int64_t t0_us, std::int64_t gap_us);

std::string event_to_jsonl(const KeyEvent& ev);
/// Throws BadRequest (with line number) on malformed input, ClockError on
/// decreasing timestamps.
std::vector<KeyEvent> read_jsonl(std::istream& in);

// Interfaces ------------------------------------------------------------------

/// Exclusive access to the physical keyboard.
class InputCapture {
 public:
  virtual ~InputCapture() = default;
  /// Throws CaptureDenied.
  virtual void acquire() = 0;
  virtual void release() = 0;
  virtual bool held() const = 0;
};

/// The virtual keyboard typing into the focused application.
class OutputSink {
 public:
  virtual ~OutputSink() = default;
  /// One synthetic key event per character.
  virtual void type_text(std::string_view text) = 0;
  virtual void backspace(std::size_t count) = 0;
  /// Replays a chord unchanged (whitelisted shortcuts during capture).
  virtual void forward(const KeyEvent& chord) = 0;
};

class SelectionProvider {
 public:
  virtual ~SelectionProvider() = default;
  /// Throws EmptySelection when nothing is selected.
  virtual std::string selection() = 0;
};

struct TimingPolicy {
  std::int64_t min_emit_gap_us = 1250;
  std::int64_t flush_debounce_us = 300'000;
};

// Simulated backends ------------------------------------------------------------

class VirtualClock {
 public:
  std::int64_t now() const { return now_; }
  /// Throws ClockError if `t` is in the past.
  void advance_to(std::int64_t t);

 private:
  std::int64_t now_ = 0;
};

/// What the focused application sees.
struct AppEvent {
  std::int64_t t_us = 0;
  /// A character, "backspace", or a chord name.
  std::string what;
  bool synthetic = false;
  friend bool operator==(const AppEvent&, const AppEvent&) = default;
};

class AppTranscript {
 public:
  /// Raw keyboard input reaching the app (no capture held).
  void raw(const KeyEvent& ev);
  void synthetic_char(std::int64_t t, std::string ch);
  void synthetic_backspace(std::int64_t t);
  void synthetic_chord(std::int64_t t, const KeyEvent& chord);

  /// The user presses the app's send button: returns the textbox contents
  /// and empties it. Logged as "send".
  std::string send(std::int64_t t);

  const std::string& textbox() const { return textbox_; }
  const std::vector<AppEvent>& events() const { return events_; }
  /// Time of the latest logged event.
  std::int64_t last_t() const { return last_t_; }

  /// Replays a log: characters append, "backspace" removes the last
  /// character, "send" clears, chords do nothing. Equals textbox().
  static std::string fold(const std::vector<AppEvent>& events);

 private:
  void append(AppEvent ev);
  std::string textbox_;
  std::vector<AppEvent> events_;
  std::int64_t last_t_ = 0;
};

class SimCapture : public InputCapture {
 public:
  void acquire() override;
  void release() override { held_ = false; }
  bool held() const override { return held_; }
  /// Makes the next acquire() fail, like a device another process grabbed.
  void deny(bool deny) { deny_ = deny; }

 private:
  bool held_ = false;
  bool deny_ = false;
};

/// Paces synthetic events at least min_emit_gap_us apart on the virtual clock.
class SimSink : public OutputSink {
 public:
  SimSink(const VirtualClock& clock, AppTranscript& app, TimingPolicy timing = {})
      : clock_(clock), app_(app), timing_(timing) {}
  void type_text(std::string_view text) override;
  void backspace(std::size_t count) override;
  void forward(const KeyEvent& chord) override;

  std::size_t emitted() const { return emitted_; }

 private:
  std::int64_t next_slot();
  const VirtualClock& clock_;
  AppTranscript& app_;
  TimingPolicy timing_;
  std::optional<std::int64_t> last_;
  std::size_t emitted_ = 0;
};

class SimSelection : public SelectionProvider {
 public:
  void stage(std::string text) { staged_ = std::move(text); }
  void clear() { staged_.reset(); }
  std::string selection() override;

 private:
  std::optional<std::string> staged_;
};

/// Splits UTF-8 into code points (invalid bytes become single units).
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace textguard::io
