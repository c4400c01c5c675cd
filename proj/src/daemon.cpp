#include "textguard/daemon.hpp"

#include <chrono>
#include <future>

#include "textguard/error.hpp"

namespace textguard::daemon {

std::int64_t now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count();
}

void EventLoop::post(Task task) {
  {
    std::lock_guard guard(mutex_);
    tasks_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void EventLoop::run(Interceptor& interceptor) {
  std::unique_lock lock(mutex_);
  while (!stop_) {
    if (!tasks_.empty()) {
      auto task = std::move(tasks_.front());
      tasks_.pop_front();
      lock.unlock();
      task();
      lock.lock();
      continue;
    }
    if (auto deadline = interceptor.deadline()) {
      const auto wait = *deadline - now_us();
      if (wait <= 0) {
        lock.unlock();
        interceptor.on_timer(now_us());
        lock.lock();
        continue;
      }
      cv_.wait_for(lock, std::chrono::microseconds(wait));
    } else {
      cv_.wait(lock);
    }
  }
}

void EventLoop::stop() {
  {
    std::lock_guard guard(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
}

bool EventLoop::stopped() const {
  std::lock_guard guard(mutex_);
  return stop_;
}

Daemon::Daemon(Messenger& messenger, io::InputCapture& capture, io::OutputSink& sink,
               io::SelectionProvider& selection, InterceptorOptions options, DaemonConfig config)
    : config_(std::move(config)) {
  gui::GuiChannel* channel = config_.headless;
  if (!channel) {
    token_ = gui::generate_token();
    gui_server_ = std::make_unique<gui::GuiServer>(
        token_,
        [this](gui::GuiFrame f) { loop_.post([this, f = std::move(f)] { interceptor_->on_gui_frame(f, now_us()); }); },
        [this] { loop_.post([this] { interceptor_->on_gui_closed(now_us()); }); });
    channel = gui_server_.get();
  }
  interceptor_ = std::make_unique<Interceptor>(messenger, capture, sink, selection, *channel, std::move(options));
}

Daemon::~Daemon() { stop(); }

void Daemon::start() {
  if (gui_server_) {
    gui_port_ = gui_server_->start(config_.host, config_.gui_port);
    if (!config_.token_file.empty()) gui::write_token_file(config_.token_file, token_);
  }
  dev_api_ = std::make_unique<devapi::Server>([this](std::string line) {
    if (loop_.stopped()) return devapi::error_response(Errc::Busy, "daemon is stopping");
    auto done = std::make_shared<std::promise<std::string>>();
    auto result = done->get_future();
    loop_.post([this, done, line = std::move(line)] {
      auto reply = devapi::handle_request(*interceptor_, line, now_us());
      pump_headless();
      done->set_value(std::move(reply));
    });
    if (result.wait_for(std::chrono::seconds(5)) != std::future_status::ready)
      return devapi::error_response(Errc::Busy, "daemon did not answer");
    return result.get();
  });
  dev_api_port_ = dev_api_->start(config_.host, config_.dev_api_port);
}

void Daemon::run() { loop_.run(*interceptor_); }

void Daemon::stop() {
  loop_.stop();
  if (dev_api_) dev_api_->stop();
  if (gui_server_) gui_server_->stop();
}

void Daemon::post_key(const io::KeyEvent& ev) {
  loop_.post([this, ev] {
    interceptor_->watch(ev);
    pump_headless();
  });
}

void Daemon::pump_headless() {
  if (!config_.headless) return;
  for (auto frames = config_.headless->drain(); !frames.empty(); frames = config_.headless->drain())
    for (const auto& f : frames) interceptor_->on_gui_frame(f, now_us());
}

}  // namespace textguard::daemon
