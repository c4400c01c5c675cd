#include "textguard/directory.hpp"

// The default backlog of 5 drops connections when many clients fetch at once.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "textguard/error.hpp"
#include "textguard/fsutil.hpp"
#include "textguard/keystore.hpp"
#include "textguard/token_codec.hpp"

namespace textguard::directory {

using nlohmann::json;
using ratchet::OneTimePreKey;
using ratchet::PreKeyBundle;

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::BadRequest, why); }

template <std::size_t N>
std::array<std::uint8_t, N> b64_field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name) || !j[name].is_string()) bad(std::string("missing ") + name);
  auto raw = codec::base64_decode(j[name].get<std::string>());
  if (!raw) bad(std::string("bad base64 in ") + name);
  auto arr = array_from<N>(*raw);
  if (!arr) bad(std::string("wrong length for ") + name);
  return *arr;
}

std::uint32_t u32_field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name) || !j[name].is_number_unsigned()) bad(std::string("missing ") + name);
  auto v = j[name].get<std::uint64_t>();
  if (v > 0xffffffffu) bad(std::string("out of range ") + name);
  return static_cast<std::uint32_t>(v);
}

json otpk_to_json(std::uint32_t id, const Key32& pub) {
  return {{"id", id}, {"public", codec::base64_encode(pub)}};
}

OneTimePreKey otpk_from_json(const json& j) { return {u32_field(j, "id"), b64_field<32>(j, "public")}; }

std::vector<OneTimePreKey> otpk_list(const json& j) {
  std::vector<OneTimePreKey> out;
  if (!j.contains("one_time_prekeys")) return out;
  if (!j["one_time_prekeys"].is_array()) bad("one_time_prekeys must be an array");
  for (const auto& e : j["one_time_prekeys"]) out.push_back(otpk_from_json(e));
  return out;
}

json error_body(Errc code) { return {{"status", "error"}, {"code", std::string(to_string(code))}}; }

}  // namespace

json bundle_to_json(const PreKeyBundle& b) {
  json j = {{"identity_pub", codec::base64_encode(b.identity_pub)},
            {"registration_id", b.registration_id},
            {"signed_prekey",
             {{"id", b.signed_prekey_id},
              {"public", codec::base64_encode(b.signed_prekey_pub)},
              {"signature", codec::base64_encode(b.prekey_signature)}}}};
  if (b.one_time_prekey) j["one_time_prekey"] = otpk_to_json(b.one_time_prekey->id, b.one_time_prekey->public_key);
  return j;
}

PreKeyBundle bundle_from_json(const json& j) {
  if (!j.is_object()) bad("bundle must be an object");
  PreKeyBundle b;
  b.identity_pub = b64_field<32>(j, "identity_pub");
  b.registration_id = u32_field(j, "registration_id");
  if (!j.contains("signed_prekey")) bad("missing signed_prekey");
  const auto& spk = j["signed_prekey"];
  b.signed_prekey_id = u32_field(spk, "id");
  b.signed_prekey_pub = b64_field<32>(spk, "public");
  b.prekey_signature = b64_field<64>(spk, "signature");
  if (j.contains("one_time_prekey") && !j["one_time_prekey"].is_null())
    b.one_time_prekey = otpk_from_json(j["one_time_prekey"]);
  return b;
}

json registration_to_json(const PreKeyBundle& bundle, const std::vector<OneTimePreKey>& one_time) {
  PreKeyBundle base = bundle;
  base.one_time_prekey.reset();
  json j = bundle_to_json(base);
  j["one_time_prekeys"] = json::array();
  for (const auto& k : one_time) j["one_time_prekeys"].push_back(otpk_to_json(k.id, k.public_key));
  return j;
}

// ---------------------------------------------------------------------------

DirectoryService::DirectoryService(std::optional<std::filesystem::path> persist)
    : persist_(std::move(persist)) {
  if (!persist_) return;
  auto raw = fs::read_file(*persist_);
  if (!raw) return;
  try {
    load_json(json::parse(raw->begin(), raw->end()));
  } catch (const json::exception& e) {
    throw Error(Errc::StoreCorrupt, persist_->string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::StoreCorrupt, persist_->string() + ": " + e.what());
  }
}

RegisterResult DirectoryService::register_user(const std::string& user_id, const PreKeyBundle& bundle,
                                               const std::vector<OneTimePreKey>& one_time) {
  if (!store::valid_contact_id(user_id)) throw Error(Errc::Rejected, "invalid user id");
  if (!bundle.signature_valid()) throw Error(Errc::Rejected, "signed prekey signature invalid");
  std::lock_guard guard(mutex_);
  RegisterResult result;
  Record fresh;
  fresh.bundle = bundle;
  fresh.bundle.one_time_prekey.reset();
  auto it = records_.find(user_id);
  if (it != records_.end()) {
    if (it->second.bundle.identity_pub != bundle.identity_pub)
      result.identity_changed = true;
    else
      fresh.served = it->second.served;
  }
  for (const auto& k : one_time)
    if (!fresh.served.count(k.id)) fresh.one_time[k.id] = k.public_key;
  records_[user_id] = std::move(fresh);
  save_locked();
  return result;
}

PreKeyBundle DirectoryService::fetch_bundle(const std::string& user_id) {
  std::lock_guard guard(mutex_);
  auto it = records_.find(user_id);
  if (it == records_.end()) throw Error(Errc::NotFound, user_id);
  auto& rec = it->second;
  PreKeyBundle out = rec.bundle;
  if (!rec.one_time.empty()) {
    auto first = rec.one_time.begin();
    out.one_time_prekey = OneTimePreKey{first->first, first->second};
    rec.served.insert(first->first);
    rec.one_time.erase(first);
    save_locked();
  }
  return out;
}

std::size_t DirectoryService::one_time_remaining(const std::string& user_id) const {
  std::lock_guard guard(mutex_);
  auto it = records_.find(user_id);
  return it == records_.end() ? 0 : it->second.one_time.size();
}

json DirectoryService::to_json() const {
  std::lock_guard guard(mutex_);
  return to_json_locked();
}

json DirectoryService::to_json_locked() const {
  json users = json::object();
  for (const auto& [id, rec] : records_) {
    json one_time = json::array();
    for (const auto& [k, pub] : rec.one_time) one_time.push_back(otpk_to_json(k, pub));
    users[id] = {{"bundle", bundle_to_json(rec.bundle)},
                 {"one_time_prekeys", std::move(one_time)},
                 {"served", rec.served}};
  }
  return {{"format", 1}, {"users", std::move(users)}};
}

void DirectoryService::load_json(const json& j) {
  if (!j.is_object() || !j.contains("users") || !j["users"].is_object()) bad("missing users");
  std::map<std::string, Record> records;
  for (const auto& [id, u] : j["users"].items()) {
    Record r;
    r.bundle = bundle_from_json(u.at("bundle"));
    for (const auto& k : otpk_list(u)) r.one_time[k.id] = k.public_key;
    if (u.contains("served")) r.served = u["served"].get<std::set<std::uint32_t>>();
    records[id] = std::move(r);
  }
  std::lock_guard guard(mutex_);
  records_ = std::move(records);
}

void DirectoryService::save_locked() const {
  if (!persist_) return;
  auto text = to_json_locked().dump(2) + "\n";
  fs::write_file_atomic(*persist_, as_bytes(text));
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
auto with_file_service(const std::filesystem::path& file, Fn&& fn) {
  auto dir = file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  try {
    fs::FileLock lock(std::filesystem::path(file) += ".lock");
    DirectoryService service(file);
    return fn(service);
  } catch (const Error& e) {
    if (e.code() == Errc::StoreUnavailable || e.code() == Errc::StoreCorrupt)
      throw Error(Errc::DirectoryUnavailable, e.what());
    throw;
  }
}

}  // namespace

RegisterResult FileDirectory::register_user(const std::string& user_id, const PreKeyBundle& bundle,
                                            const std::vector<OneTimePreKey>& one_time) {
  return with_file_service(file_, [&](DirectoryService& s) { return s.register_user(user_id, bundle, one_time); });
}

PreKeyBundle FileDirectory::fetch_bundle(const std::string& user_id) {
  return with_file_service(file_, [&](DirectoryService& s) { return s.fetch_bundle(user_id); });
}

// ---------------------------------------------------------------------------

HttpDirectoryClient::HttpDirectoryClient(std::string host, int port) : host_(std::move(host)), port_(port) {}

std::unique_ptr<HttpDirectoryClient> HttpDirectoryClient::from_url(const std::string& url) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  auto colon = rest.rfind(':');
  if (colon == std::string::npos) return std::make_unique<HttpDirectoryClient>(rest, 80);
  int port = 0;
  try {
    port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(Errc::BadRequest, "bad directory url " + url);
  }
  return std::make_unique<HttpDirectoryClient>(rest.substr(0, colon), port);
}

namespace {

json checked_response(const httplib::Result& res) {
  if (!res) throw Error(Errc::DirectoryUnavailable, httplib::to_string(res.error()));
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception&) {
    throw Error(Errc::DirectoryUnavailable, "unreadable response (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 200) return body;
  const std::string code = body.value("code", "");
  if (res->status == 404) throw Error(Errc::NotFound, code);
  if (res->status >= 400 && res->status < 500) throw Error(Errc::Rejected, code);
  throw Error(Errc::DirectoryUnavailable, "HTTP " + std::to_string(res->status));
}

/// Retries only when no connection was made, so the request never reached
/// the server and repeating it cannot consume a second prekey.
template <typename F>
httplib::Result with_retry(F&& request) {
  auto res = request();
  for (int attempt = 1; attempt < 4 && !res && res.error() == httplib::Error::Connection; ++attempt) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    res = request();
  }
  return res;
}

std::string key_path(const std::string& user) { return "/v1/keys/" + httplib::detail::encode_query_param(user); }

}  // namespace

RegisterResult HttpDirectoryClient::register_user(const std::string& user_id, const PreKeyBundle& bundle,
                                                  const std::vector<OneTimePreKey>& one_time) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5);
  auto body = registration_to_json(bundle, one_time).dump();
  auto j = checked_response(with_retry([&] { return cli.Post(key_path(user_id), body, "application/json"); }));
  return {j.value("identity_changed", false)};
}

PreKeyBundle HttpDirectoryClient::fetch_bundle(const std::string& user_id) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5);
  auto j = checked_response(with_retry([&] { return cli.Get(key_path(user_id)); }));
  try {
    return bundle_from_json(j);
  } catch (const Error& e) {
    throw Error(Errc::DirectoryUnavailable, std::string("bad bundle from server: ") + e.what());
  }
}

std::unique_ptr<DirectoryClient> make_client(const std::string& location) {
  if (location.rfind("http://", 0) == 0) return HttpDirectoryClient::from_url(location);
  return std::make_unique<FileDirectory>(location);
}

// ---------------------------------------------------------------------------

struct DirectoryServer::Impl {
  DirectoryService& service;
  httplib::Server server;
  std::thread thread;
  explicit Impl(DirectoryService& s) : service(s) {}
};

DirectoryServer::DirectoryServer(DirectoryService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto handle = [reply](httplib::Response& res, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      const int status = e.code() == Errc::NotFound ? 404 : e.code() == Errc::Rejected ? 403 : 400;
      reply(res, status, error_body(e.code()));
    } catch (const json::exception&) {
      reply(res, 400, error_body(Errc::BadRequest));
    }
  };
  impl_->server.Post(R"(/v1/keys/([^/]+))", [&svc, reply, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const std::string user = req.matches[1];
      auto j = json::parse(req.body);
      auto bundle = bundle_from_json(j);
      auto result = svc.register_user(user, bundle, otpk_list(j));
      reply(res, 200, {{"status", "ok"}, {"identity_changed", result.identity_changed}});
    });
  });
  impl_->server.Get(R"(/v1/keys/([^/]+))", [&svc, reply, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { reply(res, 200, bundle_to_json(svc.fetch_bundle(req.matches[1]))); });
  });
}

DirectoryServer::~DirectoryServer() { stop(); }

int DirectoryServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0)
    bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port))
    bound = -1;
  if (bound <= 0) throw Error(Errc::DirectoryUnavailable, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void DirectoryServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port))
    throw Error(Errc::DirectoryUnavailable, "cannot bind " + host + ":" + std::to_string(port));
}

void DirectoryServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace textguard::directory
