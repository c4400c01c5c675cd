#pragma once

// Newline-delimited text over loopback TCP. One thread per connection; the
// handler runs on that thread.

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

namespace textguard::net {

inline constexpr std::size_t kMaxLineBytes = 1 << 20;

class Connection {
 public:
  explicit Connection(int fd) : fd_(fd) {}
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Appends '\n'. False once the peer is gone.
  bool send_line(std::string_view line);
  /// Blocks for the next line (without '\n'); nullopt on EOF or error.
  std::optional<std::string> read_line();
  void shutdown();
  bool open() const { return !closed_; }

 private:
  int fd_;
  std::mutex write_mutex_;
  std::string buffer_;
  std::atomic<bool> closed_{false};
};

/// Throws NotFound when nothing accepts on host:port.
std::unique_ptr<Connection> connect(const std::string& host, int port);

class LineServer {
 public:
  using LineHandler = std::function<void(Connection&, std::string line)>;
  using CloseHandler = std::function<void(Connection&)>;

  LineServer(LineHandler on_line, CloseHandler on_close = {});
  ~LineServer();
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  /// Binds (port 0 picks one) and starts accepting. Returns the bound port.
  /// Throws BadRequest if the address cannot be bound.
  int start(const std::string& host, int port);
  void stop();

 private:
  void accept_loop();
  LineHandler on_line_;
  CloseHandler on_close_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conns_mutex_;
  std::list<std::pair<std::shared_ptr<Connection>, std::thread>> conns_;
};

}  // namespace textguard::net
