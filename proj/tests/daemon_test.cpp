#include "textguard/daemon.hpp"

#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "support/tempdir.hpp"
#include "textguard/dev_api.hpp"
#include "textguard/error.hpp"
#include "textguard/net.hpp"
#include "textguard/token_codec.hpp"

namespace textguard {
namespace {

using namespace std::chrono_literals;
using gui::FrameKind;
using nlohmann::json;
using testing::TempDir;

TEST(DevApiParse, AcceptsAndRejects) {
  auto r = devapi::parse_request(R"({"action":"encrypt","recipient":"bob"})");
  EXPECT_EQ(r.recipient, "bob");
  EXPECT_EQ(r.mode, "v1");
  EXPECT_EQ(devapi::parse_request(R"({"action":"encrypt","recipient":"bob","mode":"v2"})").mode, "v2");
  for (const char* bad : {"not json", "[]", R"({"action":"decrypt","recipient":"bob"})", R"({"action":"encrypt"})",
                          R"({"action":"encrypt","recipient":""})", R"({"action":"encrypt","recipient":"bob","mode":"v9"})"}) {
    try {
      devapi::parse_request(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::BadRequest) << bad;
    }
  }
  EXPECT_EQ(json::parse(devapi::ok_response()), json({{"status", "ok"}}));
  auto err = json::parse(devapi::error_response(Errc::Busy, "x"));
  EXPECT_EQ(err["code"], "busy");
  EXPECT_EQ(err["status"], "error");
}

/// A daemon with real sockets on loopback, its loop on a thread.
class DaemonTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store.emplace(store::Store::init(tmp / "alice", std::nullopt, entropy, 4));
    messenger.emplace(*store, &dir, entropy);
    messenger->publish("alice");
    bob_store.emplace(store::Store::init(tmp / "bob", std::nullopt, bob_entropy, 4));
    Messenger bob(*bob_store, &dir, bob_entropy);
    bob.publish("bob");
    messenger->add_contact("bob");
  }
  void TearDown() override {
    if (daemon) daemon->stop();
    if (loop.joinable()) loop.join();
  }

  void launch(gui::HeadlessGui* headless = nullptr) {
    daemon::DaemonConfig cfg;
    cfg.gui_port = 0;
    cfg.dev_api_port = 0;
    cfg.token_file = (tmp / "gui.token").string();
    cfg.headless = headless;
    daemon = std::make_unique<daemon::Daemon>(*messenger, capture, sink, selection, InterceptorOptions{}, cfg);
    daemon->start();
    loop = std::thread([this] { daemon->run(); });
  }

  template <typename F>
  auto on_loop(F f) {
    std::promise<decltype(f())> p;
    auto fut = p.get_future();
    daemon->post([&] { p.set_value(f()); });
    EXPECT_EQ(fut.wait_for(5s), std::future_status::ready);
    return fut.get();
  }

  json api(const std::string& line) {
    auto conn = net::connect("127.0.0.1", daemon->dev_api_port());
    conn->send_line(line);
    auto reply = conn->read_line();
    EXPECT_TRUE(reply);
    return reply ? json::parse(*reply) : json();
  }

  void key(const std::string& chord) {
    auto ev = io::parse_chord(chord);
    ev.timestamp_us = daemon::now_us();
    daemon->post_key(ev);
    ev.action = io::KeyAction::Up;
    daemon->post_key(ev);
  }

  Mode mode() {
    return on_loop([this] { return daemon->interceptor().mode(); });
  }

  TempDir tmp;
  // Outlives TearDown: the loop thread talks to it until stop().
  gui::HeadlessGui headless;
  crypto::SeededEntropy entropy{77};
  crypto::SeededEntropy bob_entropy{78};
  directory::DirectoryService service;
  directory::InProcessDirectory dir{service};
  std::optional<store::Store> store, bob_store;
  std::optional<Messenger> messenger;
  io::VirtualClock clock;
  io::AppTranscript app;
  io::SimCapture capture;
  io::SimSink sink{clock, app};
  io::SimSelection selection;
  std::unique_ptr<daemon::Daemon> daemon;
  std::thread loop;
};

TEST_F(DaemonTest, DevApiOverSocket) {
  launch(&headless);
  EXPECT_EQ(api(R"({"action":"encrypt","recipient":"carol"})")["code"], "contact_not_found");
  EXPECT_EQ(api("{oops")["code"], "bad_request");
  EXPECT_EQ(api(R"({"action":"encrypt","recipient":"bob"})")["status"], "ok");
  EXPECT_EQ(mode(), Mode::EncryptingV1);
  EXPECT_EQ(api(R"({"action":"encrypt","recipient":"bob"})")["code"], "busy");
}

TEST_F(DaemonTest, GuiSessionOverSocket) {
  launch();
  const auto token = gui::read_token_file((tmp / "gui.token").string());
  auto gui = net::connect("127.0.0.1", daemon->gui_port());
  ASSERT_TRUE(gui->send_line(gui::encode_frame({FrameKind::SessionStart, {{"client", "gui"}}, token})));
  // The daemon drops unauthenticated frames, so wait until it counts the GUI.
  for (int i = 0; i < 200 && mode() == Mode::Idle; ++i) {
    key("ctrl+alt+e");
    std::this_thread::sleep_for(20ms);
    if (mode() != Mode::Idle) break;
  }
  ASSERT_EQ(mode(), Mode::SelectingRecipient);

  auto next = [&](FrameKind kind) {
    for (int i = 0; i < 50; ++i) {
      auto line = gui->read_line();
      if (!line) return gui::GuiFrame{};
      auto f = gui::decode_frame(*line);
      EXPECT_TRUE(gui::authentic(f, token));
      if (f.kind == kind) return f;
    }
    return gui::GuiFrame{};
  };
  auto start = next(FrameKind::SessionStart);
  EXPECT_EQ(start.payload["purpose"], "encrypt");

  gui->send_line(gui::encode_frame({FrameKind::RecipientSet, {{"contact", "bob"}, {"mode", "v1"}}, token}));
  for (int i = 0; i < 100 && mode() != Mode::EncryptingV1; ++i) std::this_thread::sleep_for(10ms);
  ASSERT_EQ(mode(), Mode::EncryptingV1);

  key("h");
  key("i");
  EXPECT_EQ(next(FrameKind::PlaintextAppend).payload["text"], "h");
  EXPECT_EQ(next(FrameKind::PlaintextAppend).payload["text"], "i");

  // The flush runs on the wall clock once typing pauses.
  std::this_thread::sleep_for(450ms);
  const auto box = on_loop([this] { return app.textbox(); });
  EXPECT_EQ(codec::scan_tokens(box).size(), 1u);

  key("ctrl+alt+e");
  next(FrameKind::Close);
  EXPECT_EQ(mode(), Mode::Idle);
  EXPECT_FALSE(on_loop([this] { return capture.held(); }));

  Messenger bob(*bob_store, &dir, bob_entropy);
  auto r = bob.open({on_loop([this] { return app.textbox(); })}, "alice");
  ASSERT_EQ(r.status, DecryptStatus::Displayed) << r.detail;
  EXPECT_EQ(r.plaintext, "hi");
}

TEST_F(DaemonTest, GuiDisconnectReturnsToIdle) {
  launch();
  const auto token = gui::read_token_file((tmp / "gui.token").string());
  {
    auto gui = net::connect("127.0.0.1", daemon->gui_port());
    gui->send_line(gui::encode_frame({FrameKind::SessionStart, {{"client", "gui"}}, token}));
    for (int i = 0; i < 200 && mode() != Mode::SelectingRecipient; ++i) {
      key("ctrl+alt+e");
      std::this_thread::sleep_for(20ms);
    }
    ASSERT_EQ(mode(), Mode::SelectingRecipient);
    gui->shutdown();
  }
  for (int i = 0; i < 200 && mode() != Mode::Idle; ++i) std::this_thread::sleep_for(10ms);
  EXPECT_EQ(mode(), Mode::Idle);
}

}  // namespace
}  // namespace textguard
