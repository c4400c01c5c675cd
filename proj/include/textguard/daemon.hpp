#pragma once

// The running daemon: one owner thread drives the interceptor from a queue
// fed by the input source, the GUI socket and the developer API socket.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "textguard/dev_api.hpp"
#include "textguard/gui.hpp"
#include "textguard/interceptor.hpp"

namespace textguard::daemon {

/// Microseconds on the steady clock.
std::int64_t now_us();

class EventLoop {
 public:
  using Task = std::function<void()>;
  void post(Task task);
  /// Runs tasks, and the interceptor's flush timer, until stop().
  void run(Interceptor& interceptor);
  void stop();
  bool stopped() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Task> tasks_;
  bool stop_ = false;
};

struct DaemonConfig {
  std::string host = "127.0.0.1";
  int gui_port = 7734;
  int dev_api_port = devapi::kDefaultPort;
  /// Where the GUI token is written (0600).
  std::string token_file;
  /// Use this channel instead of a GUI socket (headless runs).
  gui::HeadlessGui* headless = nullptr;
};

class Daemon {
 public:
  Daemon(Messenger& messenger, io::InputCapture& capture, io::OutputSink& sink, io::SelectionProvider& selection,
         InterceptorOptions options, DaemonConfig config);
  ~Daemon();

  /// Opens the sockets and writes the token file.
  void start();
  /// Blocks on the event loop until stop().
  void run();
  void stop();

  /// Safe from any thread.
  void post_key(const io::KeyEvent& ev);
  void post(EventLoop::Task task) { loop_.post(std::move(task)); }

  int gui_port() const { return gui_port_; }
  int dev_api_port() const { return dev_api_port_; }
  Interceptor& interceptor() { return *interceptor_; }

 private:
  void pump_headless();

  DaemonConfig config_;
  std::string token_;
  EventLoop loop_;
  std::unique_ptr<gui::GuiServer> gui_server_;
  std::unique_ptr<Interceptor> interceptor_;
  std::unique_ptr<devapi::Server> dev_api_;
  int gui_port_ = 0;
  int dev_api_port_ = 0;
};

}  // namespace textguard::daemon
