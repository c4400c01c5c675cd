#include "textguard/io_linux.hpp"

#include <gtest/gtest.h>
#include <linux/input-event-codes.h>

namespace textguard::io::linux_input {
namespace {

TEST(Keymap, NamesRoundTrip) {
  for (const char* name : {"a", "z", "0", "9", "space", "backspace", "enter", "left", "home", "f4", "-", "/"}) {
    auto code = keycode_for_name(name);
    ASSERT_TRUE(code) << name;
    EXPECT_EQ(name_for_keycode(*code), name);
  }
  EXPECT_EQ(keycode_for_name("a"), KEY_A);
  EXPECT_FALSE(keycode_for_name("no-such-key"));
  EXPECT_FALSE(name_for_keycode(-1));
}

TEST(Keymap, UsLayoutStrokes) {
  auto a = stroke_for_char("a");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->keycode, KEY_A);
  EXPECT_FALSE(a->shift);
  auto upper = stroke_for_char("Q");
  ASSERT_TRUE(upper);
  EXPECT_EQ(upper->keycode, KEY_Q);
  EXPECT_TRUE(upper->shift);
  auto plus = stroke_for_char("+");
  ASSERT_TRUE(plus);
  EXPECT_EQ(plus->keycode, KEY_EQUAL);
  EXPECT_TRUE(plus->shift);
  EXPECT_EQ(stroke_for_char("/")->keycode, KEY_SLASH);
  EXPECT_EQ(stroke_for_char("=")->shift, false);
  EXPECT_FALSE(stroke_for_char("\xc3\xa9"));
}

TEST(Keymap, TokenAlphabetIsTypeable) {
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/=-";
  for (char c : alphabet) EXPECT_TRUE(stroke_for_char(std::string(1, c))) << c;
}

}  // namespace
}  // namespace textguard::io::linux_input
