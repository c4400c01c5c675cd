#include "textguard/gui.hpp"

#include <array>

#include "textguard/error.hpp"
#include "textguard/fsutil.hpp"
#include "textguard/net.hpp"

namespace textguard::gui {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<FrameKind, std::string_view>, 8> kKinds = {{
    {FrameKind::SessionStart, "session_start"},
    {FrameKind::RecipientSet, "recipient_set"},
    {FrameKind::PlaintextAppend, "plaintext_append"},
    {FrameKind::PlaintextEdit, "plaintext_edit"},
    {FrameKind::ShowDecrypted, "show_decrypted"},
    {FrameKind::ComposeSubmit, "compose_submit"},
    {FrameKind::Close, "close"},
    {FrameKind::Error, "error"},
}};

void pop_last_char(std::string& s) {
  if (s.empty()) return;
  std::size_t i = s.size() - 1;
  while (i > 0 && (static_cast<unsigned char>(s[i]) & 0xc0) == 0x80) --i;
  s.erase(i);
}

}  // namespace

std::string_view to_string(FrameKind kind) {
  for (auto [k, name] : kKinds)
    if (k == kind) return name;
  return "error";
}

std::optional<FrameKind> frame_kind_from(std::string_view name) {
  for (auto [k, n] : kKinds)
    if (n == name) return k;
  return std::nullopt;
}

std::string encode_frame(const GuiFrame& frame) {
  json j = {{"kind", to_string(frame.kind)}, {"payload", frame.payload}, {"auth", frame.auth}};
  return j.dump();
}

GuiFrame decode_frame(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw Error(Errc::BadRequest, "frame is not JSON");
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw Error(Errc::BadRequest, "frame without kind");
  auto kind = frame_kind_from(j["kind"].get<std::string>());
  if (!kind) throw Error(Errc::BadRequest, "unknown frame kind");
  GuiFrame f;
  f.kind = *kind;
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw Error(Errc::BadRequest, "payload must be an object");
    f.payload = j["payload"];
  }
  if (j.contains("auth") && j["auth"].is_string()) f.auth = j["auth"].get<std::string>();
  return f;
}

bool authentic(const GuiFrame& frame, std::string_view token) {
  return !token.empty() && frame.auth.size() == token.size() &&
         crypto::equal_ct(as_bytes(frame.auth), as_bytes(token));
}

std::string generate_token(crypto::Entropy& entropy) { return to_hex(entropy.key32()); }

void write_token_file(const std::string& path, std::string_view token) {
  fs::write_file_atomic(path, as_bytes(token));
}

std::string read_token_file(const std::string& path) {
  auto raw = fs::read_file(path);
  if (!raw) throw Error(Errc::StoreUnavailable, path + ": no token file");
  std::string t = as_string(*raw);
  while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
  return t;
}

// HeadlessGui -------------------------------------------------------------------

void HeadlessGui::send(GuiFrame frame) {
  if (!connected_) throw Error(Errc::GuiClosed, "GUI is not connected");
  switch (frame.kind) {
    case FrameKind::SessionStart: {
      mirror_.clear();
      const std::string purpose = frame.payload.value("purpose", "");
      if (purpose == "encrypt" && auto_pick_ && !frame.payload.contains("recipient"))
        pick(auto_pick_->first, auto_pick_->second);
      if (purpose == "decrypt" && auto_sender_enabled_) {
        json p = {{"contact", auto_sender_ ? json(*auto_sender_) : json(nullptr)}};
        outgoing(FrameKind::RecipientSet, std::move(p));
      }
      break;
    }
    case FrameKind::PlaintextAppend:
      mirror_ += frame.payload.value("text", "");
      break;
    case FrameKind::PlaintextEdit:
      pop_last_char(mirror_);
      break;
    case FrameKind::ShowDecrypted:
      last_decrypted_ = frame.payload.value("items", json::array());
      break;
    case FrameKind::Close:
      closed_mirror_ = mirror_;
      mirror_.clear();
      break;
    default:
      break;
  }
  received_.push_back(std::move(frame));
}

void HeadlessGui::auto_pick(std::optional<std::string> contact, std::string mode) {
  auto_pick_ = std::make_pair(std::move(contact), std::move(mode));
}

void HeadlessGui::auto_sender(std::optional<std::string> sender, bool enabled) {
  auto_sender_ = std::move(sender);
  auto_sender_enabled_ = enabled;
}

void HeadlessGui::outgoing(FrameKind kind, json payload) {
  outbox_.push_back({kind, std::move(payload), {}});
}

void HeadlessGui::pick(std::optional<std::string> contact, std::string mode, bool add) {
  json p = {{"contact", contact ? json(*contact) : json(nullptr)}, {"mode", mode}};
  if (add) p["add"] = true;
  outgoing(FrameKind::RecipientSet, std::move(p));
}

void HeadlessGui::submit(std::string text) {
  // The compose window is the mirror in v2.
  mirror_ = text;
  outgoing(FrameKind::ComposeSubmit, {{"text", std::move(text)}});
}

void HeadlessGui::cancel() { outgoing(FrameKind::Close, json::object()); }

std::vector<GuiFrame> HeadlessGui::drain() {
  std::vector<GuiFrame> out;
  out.swap(outbox_);
  return out;
}

// GuiServer ----------------------------------------------------------------------

GuiServer::GuiServer(std::string token, FrameHandler on_frame, DisconnectHandler on_disconnect)
    : token_(std::move(token)), on_frame_(std::move(on_frame)), on_disconnect_(std::move(on_disconnect)) {}

GuiServer::~GuiServer() { stop(); }

int GuiServer::start(const std::string& host, int port) {
  server_ = std::make_unique<net::LineServer>(
      [this](net::Connection& c, std::string line) { on_line(c, std::move(line)); },
      [this](net::Connection& c) { on_close(c); });
  return server_->start(host, port);
}

void GuiServer::stop() {
  if (server_) server_->stop();
  std::lock_guard guard(mutex_);
  active_ = nullptr;
}

void GuiServer::on_line(net::Connection& conn, std::string line) {
  auto reject = [&](Errc code, const std::string& message) {
    GuiFrame err{FrameKind::Error, {{"code", std::string(to_string(code))}, {"message", message}}, token_};
    conn.send_line(encode_frame(err));
  };
  GuiFrame frame;
  try {
    frame = decode_frame(line);
  } catch (const Error& e) {
    reject(Errc::BadRequest, e.what());
    return;
  }
  if (!authentic(frame, token_)) {
    // Never echo the real token to an unauthenticated peer.
    conn.send_line(encode_frame({FrameKind::Error, {{"code", "rejected"}, {"message", "bad token"}}, ""}));
    conn.shutdown();
    return;
  }
  {
    std::lock_guard guard(mutex_);
    if (active_ && active_ != &conn) {
      reject(Errc::Busy, "another GUI is attached");
      return;
    }
    active_ = &conn;
  }
  if (frame.kind == FrameKind::SessionStart) return;  // hello
  on_frame_(std::move(frame));
}

void GuiServer::on_close(net::Connection& conn) {
  bool was_active = false;
  {
    std::lock_guard guard(mutex_);
    if (active_ == &conn) {
      active_ = nullptr;
      was_active = true;
    }
  }
  if (was_active && on_disconnect_) on_disconnect_();
}

void GuiServer::send(GuiFrame frame) {
  frame.auth = token_;
  std::lock_guard guard(mutex_);
  if (!active_ || !active_->send_line(encode_frame(frame)))
    throw Error(Errc::GuiClosed, "GUI is not connected");
}

bool GuiServer::connected() const {
  std::lock_guard guard(mutex_);
  return active_ != nullptr && active_->open();
}

}  // namespace textguard::gui
