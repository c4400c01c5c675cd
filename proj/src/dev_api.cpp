#include "textguard/dev_api.hpp"

#include <nlohmann/json.hpp>

#include "textguard/interceptor.hpp"
#include "textguard/net.hpp"

namespace textguard::devapi {

using nlohmann::json;

Request parse_request(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw Error(Errc::BadRequest, "request is not JSON");
  }
  if (!j.is_object()) throw Error(Errc::BadRequest, "request must be an object");
  if (j.value("action", "") != "encrypt") throw Error(Errc::BadRequest, "unsupported action");
  if (!j.contains("recipient") || !j["recipient"].is_string())
    throw Error(Errc::BadRequest, "recipient must be a string");
  Request r;
  r.recipient = j["recipient"].get<std::string>();
  if (r.recipient.empty()) throw Error(Errc::BadRequest, "recipient is empty");
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) throw Error(Errc::BadRequest, "mode must be a string");
    r.mode = j["mode"].get<std::string>();
  }
  if (r.mode != "v1" && r.mode != "v2") throw Error(Errc::BadRequest, "mode must be v1 or v2");
  return r;
}

std::string ok_response() { return json{{"status", "ok"}}.dump(); }

std::string error_response(Errc code, std::string_view message) {
  return json{{"status", "error"}, {"code", to_string(code)}, {"message", message}}.dump();
}

std::string handle_request(Interceptor& interceptor, std::string_view line, std::int64_t now) {
  try {
    auto req = parse_request(line);
    interceptor.request_encrypt(req.recipient, req.mode, now);
    return ok_response();
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  }
}

Server::Server(Dispatch dispatch) : dispatch_(std::move(dispatch)) {}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  server_ = std::make_unique<net::LineServer>(
      [this](net::Connection& conn, std::string line) { conn.send_line(dispatch_(std::move(line))); });
  return server_->start(host, port);
}

void Server::stop() {
  if (server_) server_->stop();
}

}  // namespace textguard::devapi
