#pragma once

// Key directory: stores each user's published bundle and hands out one-time
// prekeys, each at most once.
//
// HTTP binding (JSON bodies, binary fields base64):
//   POST /v1/keys/{user}   register or replace a record
//   GET  /v1/keys/{user}   fetch a bundle, consuming one one-time prekey
// See docs/directory.md for the payloads.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "textguard/ratchet.hpp"

namespace textguard::directory {

struct RegisterResult {
  /// The record existed with a different identity key.
  bool identity_changed = false;
};

nlohmann::json bundle_to_json(const ratchet::PreKeyBundle& bundle);
/// Throws BadRequest on a malformed document.
ratchet::PreKeyBundle bundle_from_json(const nlohmann::json& j);
nlohmann::json registration_to_json(const ratchet::PreKeyBundle& bundle,
                                     const std::vector<ratchet::OneTimePreKey>& one_time);

/// The server-side record store. Thread-safe; every operation runs under one
/// lock, which makes one-time prekey consumption atomic.
class DirectoryService {
 public:
  /// With a path, records are loaded from and saved to that JSON file.
  explicit DirectoryService(std::optional<std::filesystem::path> persist = std::nullopt);

  /// Replaces the record. One-time prekeys already served under the same
  /// identity are not re-added. Throws Rejected on a bad signature or user id.
  RegisterResult register_user(const std::string& user_id, const ratchet::PreKeyBundle& bundle,
                               const std::vector<ratchet::OneTimePreKey>& one_time);
  /// Throws NotFound.
  ratchet::PreKeyBundle fetch_bundle(const std::string& user_id);
  std::size_t one_time_remaining(const std::string& user_id) const;

  /// Whole state as JSON (used for file persistence).
  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  struct Record {
    ratchet::PreKeyBundle bundle;
    std::map<std::uint32_t, Key32> one_time;
    std::set<std::uint32_t> served;
  };
  nlohmann::json to_json_locked() const;
  void save_locked() const;

  mutable std::mutex mutex_;
  std::map<std::string, Record> records_;
  std::optional<std::filesystem::path> persist_;
};

/// What the daemon and CLI talk to.
class DirectoryClient {
 public:
  virtual ~DirectoryClient() = default;
  virtual RegisterResult register_user(const std::string& user_id,
                                       const ratchet::PreKeyBundle& bundle,
                                       const std::vector<ratchet::OneTimePreKey>& one_time) = 0;
  virtual ratchet::PreKeyBundle fetch_bundle(const std::string& user_id) = 0;
};

class InProcessDirectory : public DirectoryClient {
 public:
  explicit InProcessDirectory(DirectoryService& service) : service_(service) {}
  RegisterResult register_user(const std::string& user_id, const ratchet::PreKeyBundle& bundle,
                               const std::vector<ratchet::OneTimePreKey>& one_time) override {
    return service_.register_user(user_id, bundle, one_time);
  }
  ratchet::PreKeyBundle fetch_bundle(const std::string& user_id) override {
    return service_.fetch_bundle(user_id);
  }

 private:
  DirectoryService& service_;
};

/// A JSON file shared between processes on one machine, guarded by flock.
/// Lets several local stores exchange keys without running a server.
class FileDirectory : public DirectoryClient {
 public:
  explicit FileDirectory(std::filesystem::path file) : file_(std::move(file)) {}
  RegisterResult register_user(const std::string& user_id, const ratchet::PreKeyBundle& bundle,
                               const std::vector<ratchet::OneTimePreKey>& one_time) override;
  ratchet::PreKeyBundle fetch_bundle(const std::string& user_id) override;

 private:
  std::filesystem::path file_;
};

/// Transport failures map to DirectoryUnavailable; 404 to NotFound; 4xx
/// rejections to Rejected.
class HttpDirectoryClient : public DirectoryClient {
 public:
  HttpDirectoryClient(std::string host, int port);
  /// Accepts "http://host:port".
  static std::unique_ptr<HttpDirectoryClient> from_url(const std::string& url);
  RegisterResult register_user(const std::string& user_id, const ratchet::PreKeyBundle& bundle,
                               const std::vector<ratchet::OneTimePreKey>& one_time) override;
  ratchet::PreKeyBundle fetch_bundle(const std::string& user_id) override;

 private:
  std::string host_;
  int port_;
};

/// "http://..." gives an HTTP client, anything else a FileDirectory path.
std::unique_ptr<DirectoryClient> make_client(const std::string& location);

class DirectoryServer {
 public:
  explicit DirectoryServer(DirectoryService& service);
  ~DirectoryServer();
  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port. Throws DirectoryUnavailable if binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace textguard::directory
