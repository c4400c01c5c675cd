#pragma once

// The daemon's mode state machine.
//
//   Idle --ctrl+alt+e--> SelectingRecipient --recipient_set--> EncryptingV1 / EncryptingV2
//   Idle --ctrl+alt+u--> Decrypting --recipient_set--> Idle
//   Encrypting --ctrl+alt+e--> Idle (final flush, cache entry, keys erased)
//
// Capture is held exactly while selecting a recipient or encrypting. Every
// method runs on the owner thread; "now" is microseconds on the caller's
// clock (virtual in simulations).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textguard/gui.hpp"
#include "textguard/io.hpp"
#include "textguard/messenger.hpp"
#include "textguard/stream_cipher.hpp"

namespace textguard {

enum class Mode { Idle, SelectingRecipient, EncryptingV1, EncryptingV2, Decrypting };
std::string_view to_string(Mode mode);

struct InterceptorOptions {
  io::TimingPolicy timing;
  std::string encrypt_chord = "ctrl+alt+e";
  std::string decrypt_chord = "ctrl+alt+u";
  /// Chords replayed to the app unencrypted while encrypting (v1).
  std::vector<std::string> whitelist = {"left", "right", "up", "down", "home", "end",
                                        "ctrl+a", "ctrl+c", "alt+f4"};
  /// Test-only: emit plaintext in place of ciphertext. Exists so the leak
  /// checks can be shown to fail.
  bool negative_control_disable_cipher = false;
};

enum class KeyDisposition { PassThrough, Consumed };

struct Notice {
  std::int64_t t_us = 0;
  Errc code = Errc::BadRequest;
  std::string message;
};

struct FlushRecord {
  std::int64_t flush_us = 0;
  std::int64_t last_input_us = 0;
  /// Forced by ending the message rather than by the debounce timer.
  bool final = false;
};

class Interceptor {
 public:
  Interceptor(Messenger& messenger, io::InputCapture& capture, io::OutputSink& sink,
              io::SelectionProvider& selection, gui::GuiChannel& gui, InterceptorOptions options = {});
  ~Interceptor();
  Interceptor(const Interceptor&) = delete;
  Interceptor& operator=(const Interceptor&) = delete;

  Mode mode() const { return mode_; }
  const InterceptorOptions& options() const { return options_; }

  /// Every keyboard event goes through here first. PassThrough means the
  /// caller delivers it to the focused application unchanged.
  KeyDisposition watch(const io::KeyEvent& ev);

  void on_gui_frame(const gui::GuiFrame& frame, std::int64_t now);
  void on_gui_closed(std::int64_t now);
  /// The focused window changed under an active session.
  void on_focus_lost(std::int64_t now);

  /// Developer API entry: behaves like the shortcut followed by picking
  /// `recipient`. Throws Busy, ContactNotFound, CaptureDenied, GuiClosed,
  /// DirectoryUnavailable, BadRequest; the state is Idle after any throw.
  void request_encrypt(const std::string& recipient, const std::string& mode, std::int64_t now);

  /// Pending v1 flush time, if any.
  std::optional<std::int64_t> deadline() const { return deadline_; }
  /// Runs the flush when `now` has reached the deadline.
  void on_timer(std::int64_t now);

  const std::vector<Notice>& notices() const { return notices_; }
  const std::vector<FlushRecord>& flushes() const { return flushes_; }
  /// Token text currently typed into the app by the active session.
  const std::string& emitted_token() const { return emitted_; }
  /// Tokens of finished messages, in order.
  const std::vector<codec::WireToken>& completed() const { return completed_; }

 private:
  void start_encrypt(std::int64_t now);
  void start_decrypt(std::int64_t now);
  void set_recipient(const std::string& contact, const std::string& mode, bool add, std::int64_t now);
  KeyDisposition on_key_v1(const io::KeyEvent& ev);
  KeyDisposition on_key_v2(const io::KeyEvent& ev);
  void append_text(const std::string& text, std::int64_t now);
  void delete_last(std::int64_t now);
  void flush(std::int64_t now, bool final);
  void retype(const std::string& token);
  void end_encryption(std::int64_t now);
  void compose_v2(const std::string& text, std::int64_t now);
  void decrypt_with(const std::optional<std::string>& sender, std::int64_t now);
  /// Fail-closed exit: drops keys, releases capture. `erase` backspaces over
  /// the partial token first.
  void abort(Errc code, const std::string& why, std::int64_t now, bool erase);
  void finish();
  void notice(std::int64_t now, Errc code, std::string message);
  void gui_send(gui::FrameKind kind, nlohmann::json payload);
  nlohmann::json contact_list() const;

  Messenger& messenger_;
  io::InputCapture& capture_;
  io::OutputSink& sink_;
  io::SelectionProvider& selection_;
  gui::GuiChannel& gui_;
  InterceptorOptions options_;

  Mode mode_ = Mode::Idle;
  std::optional<OutgoingMessage> message_;
  std::optional<stream::KeystreamPad> pad_;
  stream::ComposeBuffer buffer_;
  std::string v2_text_;
  std::string emitted_;
  std::optional<std::int64_t> deadline_;
  std::int64_t last_input_ = 0;
  std::string pending_selection_;

  std::vector<Notice> notices_;
  std::vector<FlushRecord> flushes_;
  std::vector<codec::WireToken> completed_;
};

}  // namespace textguard
