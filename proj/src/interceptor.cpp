#include "textguard/interceptor.hpp"

#include <algorithm>

#include "textguard/error.hpp"

namespace textguard {

using gui::FrameKind;
using nlohmann::json;

namespace {

void wipe_string(std::string& s) {
  crypto::wipe({reinterpret_cast<std::uint8_t*>(s.data()), s.size()});
  s.clear();
}

std::size_t last_char_start(const std::string& s) {
  std::size_t i = s.size() - 1;
  while (i > 0 && (static_cast<unsigned char>(s[i]) & 0xc0) == 0x80) --i;
  return i;
}

std::size_t last_char_start(ByteView b) {
  std::size_t i = b.size() - 1;
  while (i > 0 && (b[i] & 0xc0) == 0x80) --i;
  return i;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Idle: return "idle";
    case Mode::SelectingRecipient: return "selecting_recipient";
    case Mode::EncryptingV1: return "encrypting_v1";
    case Mode::EncryptingV2: return "encrypting_v2";
    case Mode::Decrypting: return "decrypting";
  }
  return "idle";
}

Interceptor::Interceptor(Messenger& messenger, io::InputCapture& capture, io::OutputSink& sink,
                         io::SelectionProvider& selection, gui::GuiChannel& gui, InterceptorOptions options)
    : messenger_(messenger), capture_(capture), sink_(sink), selection_(selection), gui_(gui),
      options_(std::move(options)) {}

Interceptor::~Interceptor() {
  buffer_.wipe();
  wipe_string(v2_text_);
}

// Keyboard -----------------------------------------------------------------------

KeyDisposition Interceptor::watch(const io::KeyEvent& ev) {
  const bool down = ev.action == io::KeyAction::Down && !io::is_modifier_key(ev.code);
  const std::int64_t t = ev.timestamp_us;
  switch (mode_) {
    case Mode::Idle:
      // Passive listener: the shortcut itself still reaches the app.
      if (down) {
        const auto chord = io::chord_name(ev);
        if (chord == options_.encrypt_chord)
          start_encrypt(t);
        else if (chord == options_.decrypt_chord)
          start_decrypt(t);
      }
      return KeyDisposition::PassThrough;
    case Mode::Decrypting:
      return KeyDisposition::PassThrough;
    case Mode::SelectingRecipient:
      if (down && io::chord_name(ev) == options_.encrypt_chord) abort(Errc::GuiClosed, "cancelled", t, false);
      return KeyDisposition::Consumed;
    case Mode::EncryptingV1:
      return down ? on_key_v1(ev) : KeyDisposition::Consumed;
    case Mode::EncryptingV2:
      return down ? on_key_v2(ev) : KeyDisposition::Consumed;
  }
  return KeyDisposition::PassThrough;
}

KeyDisposition Interceptor::on_key_v1(const io::KeyEvent& ev) {
  const auto chord = io::chord_name(ev);
  const std::int64_t t = ev.timestamp_us;
  if (chord == options_.encrypt_chord) {
    end_encryption(t);
    return KeyDisposition::Consumed;
  }
  if (std::find(options_.whitelist.begin(), options_.whitelist.end(), chord) != options_.whitelist.end()) {
    sink_.forward(ev);
    return KeyDisposition::Consumed;
  }
  try {
    if (ev.code == "backspace" && !ev.mods.ctrl && !ev.mods.alt)
      delete_last(t);
    else if (auto text = io::key_text(ev))
      append_text(*text, t);
  } catch (const Error& e) {
    if (e.code() != Errc::GuiClosed) throw;
    abort(Errc::GuiClosed, e.what(), t, true);
  }
  return KeyDisposition::Consumed;
}

KeyDisposition Interceptor::on_key_v2(const io::KeyEvent& ev) {
  const std::int64_t t = ev.timestamp_us;
  if (io::chord_name(ev) == options_.encrypt_chord) {
    compose_v2(v2_text_, t);
    return KeyDisposition::Consumed;
  }
  try {
    if (ev.code == "backspace" && !ev.mods.ctrl && !ev.mods.alt) {
      if (!v2_text_.empty()) {
        const auto index = io::utf8_chars(v2_text_).size() - 1;
        v2_text_.erase(last_char_start(v2_text_));
        gui_send(FrameKind::PlaintextEdit, {{"op", "delete"}, {"index", index}});
      }
    } else if (auto text = io::key_text(ev)) {
      v2_text_ += *text;
      gui_send(FrameKind::PlaintextAppend, {{"text", *text}});
    }
  } catch (const Error& e) {
    if (e.code() != Errc::GuiClosed) throw;
    abort(Errc::GuiClosed, e.what(), t, true);
  }
  return KeyDisposition::Consumed;
}

void Interceptor::append_text(const std::string& text, std::int64_t now) {
  for (unsigned char byte : text) stream::encrypt_append(buffer_, *pad_, byte);
  last_input_ = now;
  deadline_ = now + options_.timing.flush_debounce_us;
  gui_send(FrameKind::PlaintextAppend, {{"text", text}});
}

void Interceptor::delete_last(std::int64_t now) {
  if (buffer_.plaintext.empty()) return;
  const auto index = io::utf8_chars(as_string(buffer_.plaintext)).size() - 1;
  const std::size_t start = last_char_start(buffer_.plaintext);
  for (std::size_t i = buffer_.size(); i > start; --i) stream::edit(buffer_, *pad_, i - 1, stream::EditKind::Delete);
  last_input_ = now;
  deadline_ = now + options_.timing.flush_debounce_us;
  gui_send(FrameKind::PlaintextEdit, {{"op", "delete"}, {"index", index}});
}

// Flushing -----------------------------------------------------------------------

void Interceptor::on_timer(std::int64_t now) {
  if (mode_ != Mode::EncryptingV1 || !deadline_ || now < *deadline_) return;
  flush(now, false);
}

void Interceptor::flush(std::int64_t now, bool final) {
  deadline_.reset();
  const ByteView body = options_.negative_control_disable_cipher ? ByteView(buffer_.plaintext)
                                                                  : ByteView(buffer_.ciphertext);
  // Sealed on every flush so whatever sits in the textbox is a complete token.
  auto token = messenger_.seal(*message_, body);
  buffer_.mark_clean();
  if (token.text == emitted_) return;
  retype(token.text);
  flushes_.push_back({now, last_input_, final});
}

void Interceptor::retype(const std::string& token) {
  // Only the differing tail is erased and retyped.
  std::size_t common = 0;
  while (common < emitted_.size() && common < token.size() && emitted_[common] == token[common]) ++common;
  if (emitted_.size() > common) sink_.backspace(emitted_.size() - common);
  if (token.size() > common) sink_.type_text(std::string_view(token).substr(common));
  emitted_ = token;
}

// Encryption lifecycle -------------------------------------------------------------

void Interceptor::start_encrypt(std::int64_t now) {
  if (!gui_.connected()) {
    notice(now, Errc::GuiClosed, "the TextGuard window is not running");
    return;
  }
  try {
    capture_.acquire();
  } catch (const Error& e) {
    notice(now, e.code(), e.what());
    return;
  }
  mode_ = Mode::SelectingRecipient;
  try {
    gui_send(FrameKind::SessionStart, {{"purpose", "encrypt"}, {"contacts", contact_list()}});
  } catch (const Error& e) {
    abort(e.code(), e.what(), now, false);
  }
}

void Interceptor::request_encrypt(const std::string& recipient, const std::string& mode, std::int64_t now) {
  if (mode_ != Mode::Idle) throw Error(Errc::Busy, std::string("daemon is ") + std::string(to_string(mode_)));
  if (mode != "v1" && mode != "v2") throw Error(Errc::BadRequest, "mode must be v1 or v2");
  if (!messenger_.store().contact(recipient)) throw Error(Errc::ContactNotFound, recipient);
  if (!gui_.connected()) throw Error(Errc::GuiClosed, "the TextGuard window is not running");
  capture_.acquire();
  mode_ = Mode::SelectingRecipient;
  try {
    gui_send(FrameKind::SessionStart,
             {{"purpose", "encrypt"}, {"contacts", contact_list()}, {"recipient", recipient}});
    set_recipient(recipient, mode, false, now);
  } catch (const Error& e) {
    abort(e.code(), e.what(), now, false);
    throw;
  }
}

void Interceptor::set_recipient(const std::string& contact, const std::string& mode, bool add, std::int64_t now) {
  if (mode != "v1" && mode != "v2") throw Error(Errc::BadRequest, "mode must be v1 or v2");
  if (add) messenger_.add_contact(contact);
  message_ = messenger_.begin_outgoing(contact);
  pad_.emplace(message_->keys);
  buffer_ = {};
  buffer_.mark_clean();
  v2_text_.clear();
  emitted_.clear();
  last_input_ = now;
  mode_ = mode == "v1" ? Mode::EncryptingV1 : Mode::EncryptingV2;
  gui_send(FrameKind::RecipientSet, {{"contact", contact}, {"mode", mode}});
}

void Interceptor::end_encryption(std::int64_t now) {
  if (mode_ == Mode::EncryptingV1 && (!buffer_.plaintext.empty() || !emitted_.empty())) {
    try {
      flush(now, true);
      codec::WireToken token{emitted_};
      messenger_.remember_sent(token, as_string(buffer_.plaintext));
      completed_.push_back(std::move(token));
    } catch (const Error& e) {
      notice(now, e.code(), e.what());
    }
  }
  finish();
}

void Interceptor::compose_v2(const std::string& text, std::int64_t now) {
  if (!text.empty()) {
    try {
      Bytes body = options_.negative_control_disable_cipher ? Bytes(text.begin(), text.end())
                                                            : stream::one_shot_encrypt(message_->keys, as_bytes(text));
      auto token = messenger_.seal(*message_, body);
      retype(token.text);
      messenger_.remember_sent(token, text);
      completed_.push_back(std::move(token));
      crypto::wipe(body);
    } catch (const Error& e) {
      notice(now, e.code(), e.what());
    }
  }
  finish();
}

void Interceptor::abort(Errc code, const std::string& why, std::int64_t now, bool erase) {
  if (erase && !emitted_.empty()) sink_.backspace(emitted_.size());
  notice(now, code, why);
  if (code != Errc::GuiClosed) {
    try {
      gui_send(FrameKind::Error, {{"code", std::string(to_string(code))}, {"message", why}});
    } catch (const Error&) {
    }
  }
  finish();
}

void Interceptor::finish() {
  const bool was_encrypting = mode_ != Mode::Idle && mode_ != Mode::Decrypting;
  if (message_) message_->wipe();
  message_.reset();
  if (pad_) pad_->wipe();
  pad_.reset();
  buffer_.wipe();
  buffer_ = {};
  wipe_string(v2_text_);
  wipe_string(pending_selection_);
  emitted_.clear();
  deadline_.reset();
  if (capture_.held()) capture_.release();
  mode_ = Mode::Idle;
  if (was_encrypting) {
    try {
      gui_send(FrameKind::Close, json::object());
    } catch (const Error&) {
    }
  }
}

// Decryption ---------------------------------------------------------------------

void Interceptor::start_decrypt(std::int64_t now) {
  std::string selected;
  try {
    selected = selection_.selection();
  } catch (const Error& e) {
    notice(now, e.code(), e.what());
    return;
  }
  if (codec::scan_tokens(selected).empty()) {
    notice(now, Errc::NothingToDecrypt, "the selection holds no token");
    try {
      gui_send(FrameKind::Error, {{"code", "nothing_to_decrypt"}, {"message", "the selection holds no token"}});
    } catch (const Error&) {
    }
    return;
  }
  if (!gui_.connected()) {
    notice(now, Errc::GuiClosed, "the TextGuard window is not running");
    return;
  }
  pending_selection_ = std::move(selected);
  mode_ = Mode::Decrypting;
  try {
    gui_send(FrameKind::SessionStart, {{"purpose", "decrypt"}, {"contacts", contact_list()}});
  } catch (const Error& e) {
    notice(now, e.code(), e.what());
    finish();
  }
}

void Interceptor::decrypt_with(const std::optional<std::string>& sender, std::int64_t now) {
  json items = json::array();
  try {
    for (const auto& r : messenger_.open_selection(pending_selection_, sender)) {
      json item = {{"status", std::string(to_string(r.status))}, {"cached", r.from_cache}};
      if (!r.sender.empty()) item["sender"] = r.sender;
      if (r.status == DecryptStatus::Displayed) item["text"] = r.plaintext;
      if (r.code) item["code"] = std::string(to_string(*r.code));
      items.push_back(std::move(item));
    }
    gui_send(FrameKind::ShowDecrypted, {{"items", std::move(items)}});
  } catch (const Error& e) {
    notice(now, e.code(), e.what());
  }
  finish();
}

// GUI ------------------------------------------------------------------------------

void Interceptor::on_gui_frame(const gui::GuiFrame& frame, std::int64_t now) {
  switch (frame.kind) {
    case FrameKind::RecipientSet: {
      const auto& p = frame.payload;
      if (mode_ == Mode::Decrypting) {
        std::optional<std::string> sender;
        if (p.contains("contact") && p["contact"].is_string()) sender = p["contact"].get<std::string>();
        decrypt_with(sender, now);
        return;
      }
      if (mode_ != Mode::SelectingRecipient) return;
      if (!p.contains("contact") || !p["contact"].is_string()) {
        abort(Errc::BadRequest, "no recipient chosen", now, false);
        return;
      }
      try {
        set_recipient(p["contact"].get<std::string>(), p.value("mode", "v1"), p.value("add", false), now);
      } catch (const Error& e) {
        abort(e.code(), e.what(), now, false);
      }
      return;
    }
    case FrameKind::ComposeSubmit:
      if (mode_ == Mode::EncryptingV2) compose_v2(frame.payload.value("text", ""), now);
      return;
    case FrameKind::Close:
      if (mode_ == Mode::Decrypting)
        finish();
      else if (mode_ != Mode::Idle)
        abort(Errc::GuiClosed, "cancelled in the window", now, true);
      return;
    default:
      return;
  }
}

void Interceptor::on_gui_closed(std::int64_t now) {
  if (mode_ == Mode::Decrypting)
    finish();
  else if (mode_ != Mode::Idle)
    abort(Errc::GuiClosed, "the window went away", now, true);
}

void Interceptor::on_focus_lost(std::int64_t now) {
  // Typing into whatever window now has focus would be worse than leaving
  // the last token where it was.
  if (mode_ != Mode::Idle && mode_ != Mode::Decrypting) abort(Errc::FocusLost, "focus changed", now, false);
}

// Helpers ----------------------------------------------------------------------------

void Interceptor::notice(std::int64_t now, Errc code, std::string message) {
  notices_.push_back({now, code, std::move(message)});
}

void Interceptor::gui_send(FrameKind kind, json payload) { gui_.send({kind, std::move(payload), {}}); }

json Interceptor::contact_list() const {
  json ids = json::array();
  for (const auto& c : messenger_.store().contacts()) ids.push_back(c.contact_id);
  return ids;
}

}  // namespace textguard
