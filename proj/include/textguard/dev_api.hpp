#pragma once

// Application-initiated encryption. One JSON object per line on a loopback
// socket (port 5000 by default):
//
//   -> {"action": "encrypt", "recipient": "bob", "mode": "v1"}
//   <- {"status": "ok"}
//   <- {"status": "error", "code": "contact_not_found", "message": "..."}
//
// Codes: contact_not_found, busy, bad_request, plus any daemon error code.
// The socket can only start encryption; nothing sent here reaches an app.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "textguard/error.hpp"

namespace textguard {
class Interceptor;
}
namespace textguard::net {
class LineServer;
}

namespace textguard::devapi {

inline constexpr int kDefaultPort = 5000;

struct Request {
  std::string recipient;
  std::string mode = "v1";
};

/// Throws BadRequest.
Request parse_request(std::string_view line);
std::string ok_response();
std::string error_response(Errc code, std::string_view message);

/// Runs one request line against the interceptor, on its owner thread.
/// Never throws; failures become error responses.
std::string handle_request(Interceptor& interceptor, std::string_view line, std::int64_t now);

/// Accepts connections and hands each request line to `dispatch`, which
/// returns the response line. Connections stay open across bad requests.
class Server {
 public:
  using Dispatch = std::function<std::string(std::string line)>;
  explicit Server(Dispatch dispatch);
  ~Server();
  int start(const std::string& host, int port);
  void stop();

 private:
  Dispatch dispatch_;
  std::unique_ptr<net::LineServer> server_;
};

}  // namespace textguard::devapi
