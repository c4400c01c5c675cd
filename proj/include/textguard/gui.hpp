#pragma once

// Daemon <-> GUI frame protocol.
//
// One JSON object per line:
//   {"kind": "plaintext_append", "payload": {"text": "h"}, "auth": "<token>"}
//
// The token is 32 random bytes in hex, written to an owner-only file when the
// daemon starts. Both directions carry it; frames with a wrong token are
// answered with an error frame (code "rejected") and the connection is
// dropped. A GUI opens with session_start {"client": "gui"}.
//
// Payloads:
//   session_start    daemon->gui {"purpose": "encrypt"|"decrypt", "contacts": [...], "recipient"?}
//   recipient_set    gui->daemon {"contact": id|null, "mode": "v1"|"v2", "add"?: bool}
//                    daemon->gui {"contact": id, "mode": ...} (window title)
//   plaintext_append daemon->gui {"text": "..."}
//   plaintext_edit   daemon->gui {"op": "delete", "index": n}
//   show_decrypted   daemon->gui {"items": [{"status": "displayed"|"integrity_warning"|
//                                 "unrecoverable", "sender"?, "text"?, "code"?, "cached"?}]}
//   compose_submit   gui->daemon {"text": "..."}
//   close            either way, {}
//   error            either way, {"code": "...", "message": "..."}

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "textguard/crypto.hpp"

namespace textguard::net {
class Connection;
class LineServer;
}  // namespace textguard::net

namespace textguard::gui {

enum class FrameKind {
  SessionStart,
  RecipientSet,
  PlaintextAppend,
  PlaintextEdit,
  ShowDecrypted,
  ComposeSubmit,
  Close,
  Error,
};

std::string_view to_string(FrameKind kind);
std::optional<FrameKind> frame_kind_from(std::string_view name);

struct GuiFrame {
  FrameKind kind = FrameKind::Error;
  nlohmann::json payload = nlohmann::json::object();
  std::string auth;
};

std::string encode_frame(const GuiFrame& frame);
/// Throws BadRequest on anything but a well-formed frame.
GuiFrame decode_frame(std::string_view line);
bool authentic(const GuiFrame& frame, std::string_view token);

std::string generate_token(crypto::Entropy& entropy = crypto::system_entropy());
/// Owner-only (0600).
void write_token_file(const std::string& path, std::string_view token);
/// Throws StoreUnavailable.
std::string read_token_file(const std::string& path);

/// The daemon's side of the GUI: where plaintext goes.
class GuiChannel {
 public:
  virtual ~GuiChannel() = default;
  /// Throws GuiClosed when no GUI is attached or the write fails.
  virtual void send(GuiFrame frame) = 0;
  virtual bool connected() const = 0;
};

/// Stand-in GUI for tests and headless runs. Frames it "sends" back to the
/// daemon wait in an outbox until drained by the caller.
class HeadlessGui : public GuiChannel {
 public:
  void send(GuiFrame frame) override;
  bool connected() const override { return connected_; }

  /// Simulates the window going away.
  void disconnect() { connected_ = false; }
  void reconnect() { connected_ = true; }

  /// Reply automatically to encrypt session_start frames.
  void auto_pick(std::optional<std::string> contact, std::string mode = "v1");
  /// Reply automatically to decrypt session_start frames with this sender
  /// (nullopt means "not sure").
  void auto_sender(std::optional<std::string> sender, bool enabled = true);

  void pick(std::optional<std::string> contact, std::string mode, bool add = false);
  void submit(std::string text);
  void cancel();

  std::vector<GuiFrame> drain();
  const std::vector<GuiFrame>& received() const { return received_; }
  /// The live plaintext mirror, as the window would show it.
  const std::string& mirror() const { return mirror_; }
  /// The mirror as it stood when the last session closed.
  const std::string& closed_mirror() const { return closed_mirror_; }
  /// Items of the most recent show_decrypted frame.
  nlohmann::json last_decrypted() const { return last_decrypted_; }

 private:
  void outgoing(FrameKind kind, nlohmann::json payload);
  bool connected_ = true;
  std::optional<std::pair<std::optional<std::string>, std::string>> auto_pick_;
  bool auto_sender_enabled_ = true;
  std::optional<std::string> auto_sender_;
  std::vector<GuiFrame> received_;
  std::vector<GuiFrame> outbox_;
  std::string mirror_;
  std::string closed_mirror_;
  nlohmann::json last_decrypted_ = nlohmann::json::array();
};

/// Loopback listener for a real GUI process. The first connection that
/// presents the token becomes the attached GUI.
class GuiServer : public GuiChannel {
 public:
  using FrameHandler = std::function<void(GuiFrame)>;
  using DisconnectHandler = std::function<void()>;

  GuiServer(std::string token, FrameHandler on_frame, DisconnectHandler on_disconnect = {});
  ~GuiServer() override;

  int start(const std::string& host, int port);
  void stop();

  void send(GuiFrame frame) override;
  bool connected() const override;

 private:
  void on_line(net::Connection& conn, std::string line);
  void on_close(net::Connection& conn);

  std::string token_;
  FrameHandler on_frame_;
  DisconnectHandler on_disconnect_;
  std::unique_ptr<net::LineServer> server_;
  mutable std::mutex mutex_;
  net::Connection* active_ = nullptr;
};

}  // namespace textguard::gui
