#include "textguard/gui.hpp"

#include <gtest/gtest.h>
#include <sys/stat.h>

#include <chrono>
#include <condition_variable>
#include <thread>

#include "support/tempdir.hpp"
#include "textguard/error.hpp"
#include "textguard/net.hpp"

namespace textguard::gui {
namespace {

using nlohmann::json;
using namespace std::chrono_literals;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::CryptoFailure;
}

TEST(Frames, EncodeDecodeEveryKind) {
  for (auto kind : {FrameKind::SessionStart, FrameKind::RecipientSet, FrameKind::PlaintextAppend,
                    FrameKind::PlaintextEdit, FrameKind::ShowDecrypted, FrameKind::ComposeSubmit,
                    FrameKind::Close, FrameKind::Error}) {
    GuiFrame f{kind, {{"text", "é\n"}}, "tok"};
    auto line = encode_frame(f);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    auto back = decode_frame(line);
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.payload, f.payload);
    EXPECT_EQ(back.auth, "tok");
  }
}

TEST(Frames, RejectsMalformed) {
  for (std::string bad : {"", "nope", "[]", R"({"payload":{}})", R"({"kind":"launch"})",
                          R"({"kind":"close","payload":[1]})"})
    EXPECT_EQ(code_of([&] { decode_frame(bad); }), Errc::BadRequest) << bad;
}

TEST(Frames, AuthenticRequiresExactToken) {
  GuiFrame f{FrameKind::Close, json::object(), "abc"};
  EXPECT_TRUE(authentic(f, "abc"));
  EXPECT_FALSE(authentic(f, "abd"));
  EXPECT_FALSE(authentic(f, "abcd"));
  f.auth.clear();
  EXPECT_FALSE(authentic(f, ""));
}

TEST(Token, FileIsOwnerOnly) {
  testing::TempDir tmp;
  crypto::SeededEntropy e(1);
  auto token = generate_token(e);
  EXPECT_EQ(token.size(), 64u);
  auto path = (tmp / "gui.token").string();
  write_token_file(path, token);
  struct stat st {};
  ASSERT_EQ(::stat(path.c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600u);
  EXPECT_EQ(read_token_file(path), token);
  EXPECT_EQ(code_of([&] { read_token_file((tmp / "missing").string()); }), Errc::StoreUnavailable);
}

TEST(HeadlessGui, MirrorsPlaintextAndAnswersSessionStart) {
  HeadlessGui gui;
  gui.auto_pick("bob", "v2");
  gui.send({FrameKind::SessionStart, {{"purpose", "encrypt"}, {"contacts", {"bob"}}}, ""});
  auto out = gui.drain();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].kind, FrameKind::RecipientSet);
  EXPECT_EQ(out[0].payload["contact"], "bob");
  EXPECT_EQ(out[0].payload["mode"], "v2");

  gui.send({FrameKind::PlaintextAppend, {{"text", "hé"}}, ""});
  gui.send({FrameKind::PlaintextEdit, {{"op", "delete"}, {"index", 1}}, ""});
  gui.send({FrameKind::PlaintextAppend, {{"text", "i"}}, ""});
  EXPECT_EQ(gui.mirror(), "hi");

  gui.auto_sender(std::nullopt);
  gui.send({FrameKind::SessionStart, {{"purpose", "decrypt"}}, ""});
  out = gui.drain();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].payload["contact"].is_null());

  gui.disconnect();
  EXPECT_EQ(code_of([&] { gui.send({FrameKind::Close, json::object(), ""}); }), Errc::GuiClosed);
}

// A GUI process over loopback.
class GuiServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server = std::make_unique<GuiServer>(
        token,
        [this](GuiFrame f) {
          std::lock_guard g(m);
          frames.push_back(std::move(f));
          cv.notify_all();
        },
        [this] {
          std::lock_guard g(m);
          ++disconnects;
          cv.notify_all();
        });
    port = server->start("127.0.0.1", 0);
  }
  void TearDown() override { server->stop(); }

  bool wait_for(const std::function<bool()>& pred) {
    std::unique_lock lock(m);
    return cv.wait_for(lock, 5s, pred);
  }
  bool wait_connected() {
    for (int i = 0; i < 500; ++i) {
      if (server->connected()) return true;
      std::this_thread::sleep_for(10ms);
    }
    return false;
  }

  std::string token = std::string(64, 'a');
  std::unique_ptr<GuiServer> server;
  int port = 0;
  std::mutex m;
  std::condition_variable cv;
  std::vector<GuiFrame> frames;
  int disconnects = 0;
};

TEST_F(GuiServerTest, WrongTokenIsRejectedAndDropped) {
  auto conn = net::connect("127.0.0.1", port);
  conn->send_line(encode_frame({FrameKind::SessionStart, {{"client", "gui"}}, "wrong"}));
  auto reply = conn->read_line();
  ASSERT_TRUE(reply);
  auto f = decode_frame(*reply);
  EXPECT_EQ(f.kind, FrameKind::Error);
  EXPECT_EQ(f.payload["code"], "rejected");
  EXPECT_EQ(f.auth, "");
  EXPECT_FALSE(conn->read_line());
  EXPECT_FALSE(server->connected());
  EXPECT_EQ(code_of([&] { server->send({FrameKind::Close, json::object(), ""}); }), Errc::GuiClosed);
}

TEST_F(GuiServerTest, AttachedGuiExchangesFrames) {
  auto conn = net::connect("127.0.0.1", port);
  conn->send_line(encode_frame({FrameKind::SessionStart, {{"client", "gui"}}, token}));
  ASSERT_TRUE(wait_connected());

  server->send({FrameKind::PlaintextAppend, {{"text", "x"}}, ""});
  auto line = conn->read_line();
  ASSERT_TRUE(line);
  auto f = decode_frame(*line);
  EXPECT_EQ(f.kind, FrameKind::PlaintextAppend);
  EXPECT_TRUE(authentic(f, token));

  conn->send_line(encode_frame({FrameKind::RecipientSet, {{"contact", "bob"}, {"mode", "v1"}}, token}));
  ASSERT_TRUE(wait_for([&] { return !frames.empty(); }));
  EXPECT_EQ(frames[0].kind, FrameKind::RecipientSet);

  // A second GUI is turned away while the first is attached.
  auto other = net::connect("127.0.0.1", port);
  other->send_line(encode_frame({FrameKind::SessionStart, {{"client", "gui"}}, token}));
  auto busy = other->read_line();
  ASSERT_TRUE(busy);
  EXPECT_EQ(decode_frame(*busy).payload["code"], "busy");

  conn->shutdown();
  ASSERT_TRUE(wait_for([&] { return disconnects == 1; }));
  EXPECT_FALSE(server->connected());
}

}  // namespace
}  // namespace textguard::gui
