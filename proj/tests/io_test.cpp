#include "textguard/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "textguard/error.hpp"

namespace textguard::io {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::CryptoFailure;
}

TEST(Chords, NameAndParseRoundTrip) {
  for (std::string c : {"ctrl+alt+e", "ctrl+c", "left", "a", "alt+f4", "shift+tab", "ctrl+alt+u"})
    EXPECT_EQ(chord_name(parse_chord(c)), c);
  EXPECT_EQ(code_of([] { parse_chord(""); }), Errc::BadRequest);
  EXPECT_EQ(code_of([] { parse_chord("ctrl+"); }), Errc::BadRequest);
  EXPECT_EQ(code_of([] { parse_chord("hyper+x"); }), Errc::BadRequest);
}

TEST(KeyText, ShiftAndNamedKeys) {
  auto down = [](std::string code, Modifiers m = {}) { return KeyEvent{0, std::move(code), KeyAction::Down, m}; };
  EXPECT_EQ(key_text(down("a")), "a");
  EXPECT_EQ(key_text(down("a", {.shift = true})), "A");
  EXPECT_EQ(key_text(down("1", {.shift = true})), "!");
  EXPECT_EQ(key_text(down("space")), " ");
  EXPECT_EQ(key_text(down("enter")), "\n");
  EXPECT_EQ(key_text(down("é")), "é");
  EXPECT_FALSE(key_text(down("c", {.ctrl = true})));
  EXPECT_FALSE(key_text(down("left")));
  EXPECT_FALSE(key_text(down("backspace")));
}

TEST(EventsForText, TypesBackTheSameText) {
  const std::string text = "Hello, World! ça va?\n";
  auto events = events_for_text(text, 1000, 10'000);
  std::string typed;
  std::int64_t last = 0;
  for (const auto& ev : events) {
    EXPECT_GE(ev.timestamp_us, last);
    last = ev.timestamp_us;
    if (ev.action == KeyAction::Down)
      if (auto t = key_text(ev)) typed += *t;
  }
  EXPECT_EQ(typed, text);
  EXPECT_EQ(events.size(), 2 * utf8_chars(text).size());
}

TEST(Jsonl, RoundTripAndErrors) {
  auto events = events_for_text("aB", 0, 5000);
  events.push_back(parse_chord("ctrl+alt+e"));
  events.back().timestamp_us = 20'000;
  std::stringstream ss;
  for (const auto& e : events) ss << event_to_jsonl(e) << "\n";
  ss << "\n";  // blank lines are ignored
  EXPECT_EQ(read_jsonl(ss), events);

  std::stringstream bad("{\"t_us\": 1, \"key\": \"a\", \"action\": \"down\"}\nnot json\n");
  try {
    read_jsonl(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadRequest);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::stringstream back("{\"t_us\": 10, \"key\": \"a\", \"action\": \"down\"}\n"
                         "{\"t_us\": 5, \"key\": \"a\", \"action\": \"up\"}\n");
  EXPECT_EQ(code_of([&] { read_jsonl(back); }), Errc::ClockError);
}

TEST(Utf8, SplitsCodePoints) {
  EXPECT_EQ(utf8_chars("aé中😀"), (std::vector<std::string>{"a", "é", "中", "😀"}));
  EXPECT_EQ(utf8_chars("\xff" "a").size(), 2u);
}

TEST(VirtualClock, RefusesToGoBack) {
  VirtualClock c;
  c.advance_to(10);
  c.advance_to(10);
  EXPECT_EQ(code_of([&] { c.advance_to(9); }), Errc::ClockError);
  EXPECT_EQ(c.now(), 10);
}

TEST(AppTranscript, RawInputEditsTextbox) {
  AppTranscript app;
  for (const auto& ev : events_for_text("hi!", 0, 1000)) app.raw(ev);
  app.raw({5000, "backspace", KeyAction::Down, {}});
  app.raw({6000, "e", KeyAction::Down, {.ctrl = true, .alt = true}});
  app.raw({7000, "c", KeyAction::Down, {.ctrl = true}});
  EXPECT_EQ(app.textbox(), "hi");
  EXPECT_EQ(app.events().back().what, "ctrl+c");
  EXPECT_EQ(AppTranscript::fold(app.events()), app.textbox());
  EXPECT_EQ(app.send(8000), "hi");
  EXPECT_EQ(app.textbox(), "");
}

TEST(SimSink, PacesSyntheticEvents) {
  VirtualClock clock;
  AppTranscript app;
  SimSink sink(clock, app);
  sink.type_text("abc");
  sink.backspace(2);
  sink.forward(parse_chord("ctrl+a"));
  clock.advance_to(100);
  sink.type_text("é");
  ASSERT_EQ(app.events().size(), 7u);
  for (std::size_t i = 1; i < app.events().size(); ++i)
    EXPECT_GE(app.events()[i].t_us - app.events()[i - 1].t_us, 1250);
  EXPECT_EQ(app.textbox(), "aé");
  EXPECT_EQ(sink.emitted(), 7u);
}

TEST(SimBackends, CaptureAndSelection) {
  SimCapture cap;
  cap.acquire();
  EXPECT_TRUE(cap.held());
  cap.release();
  cap.deny(true);
  EXPECT_EQ(code_of([&] { cap.acquire(); }), Errc::CaptureDenied);
  EXPECT_FALSE(cap.held());

  SimSelection sel;
  EXPECT_EQ(code_of([&] { sel.selection(); }), Errc::EmptySelection);
  sel.stage("x");
  EXPECT_EQ(sel.selection(), "x");
}

}  // namespace
}  // namespace textguard::io
