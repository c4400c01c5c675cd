#include "textguard/io_linux.hpp"

#include <fcntl.h>
#include <linux/input.h>
#include <linux/uinput.h>
#include <poll.h>
#include <sys/ioctl.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>

#include "textguard/error.hpp"

namespace textguard::io::linux_input {

namespace {

struct Named {
  int keycode;
  std::string_view name;
};

constexpr std::array kNamed = {
    Named{KEY_A, "a"}, Named{KEY_B, "b"}, Named{KEY_C, "c"}, Named{KEY_D, "d"}, Named{KEY_E, "e"},
    Named{KEY_F, "f"}, Named{KEY_G, "g"}, Named{KEY_H, "h"}, Named{KEY_I, "i"}, Named{KEY_J, "j"},
    Named{KEY_K, "k"}, Named{KEY_L, "l"}, Named{KEY_M, "m"}, Named{KEY_N, "n"}, Named{KEY_O, "o"},
    Named{KEY_P, "p"}, Named{KEY_Q, "q"}, Named{KEY_R, "r"}, Named{KEY_S, "s"}, Named{KEY_T, "t"},
    Named{KEY_U, "u"}, Named{KEY_V, "v"}, Named{KEY_W, "w"}, Named{KEY_X, "x"}, Named{KEY_Y, "y"},
    Named{KEY_Z, "z"}, Named{KEY_1, "1"}, Named{KEY_2, "2"}, Named{KEY_3, "3"}, Named{KEY_4, "4"},
    Named{KEY_5, "5"}, Named{KEY_6, "6"}, Named{KEY_7, "7"}, Named{KEY_8, "8"}, Named{KEY_9, "9"},
    Named{KEY_0, "0"}, Named{KEY_MINUS, "-"}, Named{KEY_EQUAL, "="}, Named{KEY_LEFTBRACE, "["},
    Named{KEY_RIGHTBRACE, "]"}, Named{KEY_BACKSLASH, "\\"}, Named{KEY_SEMICOLON, ";"},
    Named{KEY_APOSTROPHE, "'"}, Named{KEY_GRAVE, "`"}, Named{KEY_COMMA, ","}, Named{KEY_DOT, "."},
    Named{KEY_SLASH, "/"}, Named{KEY_SPACE, "space"}, Named{KEY_ENTER, "enter"}, Named{KEY_TAB, "tab"},
    Named{KEY_BACKSPACE, "backspace"}, Named{KEY_ESC, "escape"}, Named{KEY_LEFT, "left"},
    Named{KEY_RIGHT, "right"}, Named{KEY_UP, "up"}, Named{KEY_DOWN, "down"}, Named{KEY_HOME, "home"},
    Named{KEY_END, "end"}, Named{KEY_DELETE, "delete"}, Named{KEY_F1, "f1"}, Named{KEY_F2, "f2"},
    Named{KEY_F3, "f3"}, Named{KEY_F4, "f4"}, Named{KEY_F5, "f5"}, Named{KEY_F6, "f6"}, Named{KEY_F7, "f7"},
    Named{KEY_F8, "f8"}, Named{KEY_F9, "f9"}, Named{KEY_F10, "f10"}, Named{KEY_F11, "f11"},
    Named{KEY_F12, "f12"}, Named{KEY_LEFTCTRL, "ctrl"}, Named{KEY_RIGHTCTRL, "ctrl"},
    Named{KEY_LEFTALT, "alt"}, Named{KEY_RIGHTALT, "alt"}, Named{KEY_LEFTSHIFT, "shift"},
    Named{KEY_RIGHTSHIFT, "shift"},
};

// Shifted US punctuation and the key that produces it.
constexpr std::array<std::pair<char, char>, 21> kShiftedFrom = {{
    {'!', '1'}, {'@', '2'}, {'#', '3'}, {'$', '4'}, {'%', '5'}, {'^', '6'}, {'&', '7'},
    {'*', '8'}, {'(', '9'}, {')', '0'}, {'_', '-'}, {'+', '='}, {'{', '['}, {'}', ']'},
    {'|', '\\'}, {':', ';'}, {'"', '\''}, {'~', '`'}, {'<', ','}, {'>', '.'}, {'?', '/'},
}};

void sleep_us(std::int64_t us) { std::this_thread::sleep_for(std::chrono::microseconds(us)); }

}  // namespace

std::optional<std::string> name_for_keycode(int keycode) {
  for (const auto& n : kNamed)
    if (n.keycode == keycode) return std::string(n.name);
  return std::nullopt;
}

std::optional<int> keycode_for_name(std::string_view name) {
  for (const auto& n : kNamed)
    if (n.name == name) return n.keycode;
  return std::nullopt;
}

std::optional<Stroke> stroke_for_char(std::string_view ch) {
  if (ch.size() != 1) return std::nullopt;
  const char c = ch[0];
  if (c == ' ') return Stroke{KEY_SPACE, false};
  if (c == '\n') return Stroke{KEY_ENTER, false};
  if (c == '\t') return Stroke{KEY_TAB, false};
  if (c >= 'A' && c <= 'Z') {
    auto k = keycode_for_name(std::string(1, static_cast<char>(c - 'A' + 'a')));
    return k ? std::optional<Stroke>(Stroke{*k, true}) : std::nullopt;
  }
  for (auto [shifted, base] : kShiftedFrom)
    if (c == shifted) return Stroke{*keycode_for_name(std::string(1, base)), true};
  if (auto k = keycode_for_name(std::string(1, c))) return Stroke{*k, false};
  return std::nullopt;
}

std::vector<std::string> find_keyboards() {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator("/dev/input", ec)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("event", 0) != 0) continue;
    int fd = ::open(entry.path().c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) continue;
    std::array<unsigned long, KEY_MAX / (8 * sizeof(unsigned long)) + 1> bits{};
    if (::ioctl(fd, EVIOCGBIT(EV_KEY, sizeof(bits)), bits.data()) >= 0) {
      auto has = [&](int k) { return (bits[k / (8 * sizeof(unsigned long))] >> (k % (8 * sizeof(unsigned long)))) & 1; };
      if (has(KEY_A) && has(KEY_Z) && has(KEY_ENTER)) out.push_back(entry.path().string());
    }
    ::close(fd);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// EvdevKeyboard ------------------------------------------------------------------------

EvdevKeyboard::EvdevKeyboard(const std::string& path, Handler on_event) : on_event_(std::move(on_event)) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_NONBLOCK | O_CLOEXEC);
  if (fd_ < 0) throw Error(Errc::CaptureDenied, path + ": " + std::strerror(errno));
  reader_ = std::thread([this] { read_loop(); });
}

EvdevKeyboard::~EvdevKeyboard() {
  running_ = false;
  if (reader_.joinable()) reader_.join();
  if (held_) ::ioctl(fd_, EVIOCGRAB, 0);
  if (fd_ >= 0) ::close(fd_);
}

void EvdevKeyboard::acquire() {
  if (::ioctl(fd_, EVIOCGRAB, 1) != 0)
    throw Error(Errc::CaptureDenied, std::string("keyboard grab failed: ") + std::strerror(errno));
  held_ = true;
}

void EvdevKeyboard::release() {
  if (held_) ::ioctl(fd_, EVIOCGRAB, 0);
  held_ = false;
}

void EvdevKeyboard::read_loop() {
  pollfd p{fd_, POLLIN, 0};
  while (running_) {
    if (::poll(&p, 1, 100) <= 0) continue;
    input_event ev{};
    while (::read(fd_, &ev, sizeof(ev)) == static_cast<ssize_t>(sizeof(ev))) {
      if (ev.type != EV_KEY || ev.value == 2) continue;  // ignore autorepeat
      auto name = name_for_keycode(ev.code);
      if (!name) continue;
      const bool down = ev.value == 1;
      if (*name == "ctrl") mods_.ctrl = down;
      if (*name == "alt") mods_.alt = down;
      if (*name == "shift") mods_.shift = down;
      KeyEvent k;
      k.timestamp_us = static_cast<std::int64_t>(ev.input_event_sec) * 1'000'000 + ev.input_event_usec;
      k.code = *name;
      k.action = down ? KeyAction::Down : KeyAction::Up;
      k.mods = mods_;
      on_event_(k);
    }
  }
}

// UinputSink ---------------------------------------------------------------------------

UinputSink::UinputSink(TimingPolicy timing) : timing_(timing) {
  fd_ = ::open("/dev/uinput", O_WRONLY | O_NONBLOCK | O_CLOEXEC);
  if (fd_ < 0) throw Error(Errc::CaptureDenied, std::string("/dev/uinput: ") + std::strerror(errno));
  ::ioctl(fd_, UI_SET_EVBIT, EV_KEY);
  ::ioctl(fd_, UI_SET_EVBIT, EV_SYN);
  for (const auto& n : kNamed) ::ioctl(fd_, UI_SET_KEYBIT, n.keycode);
  uinput_setup setup{};
  setup.id.bustype = BUS_VIRTUAL;
  std::snprintf(setup.name, UINPUT_MAX_NAME_SIZE, "textguard virtual keyboard");
  if (::ioctl(fd_, UI_DEV_SETUP, &setup) != 0 || ::ioctl(fd_, UI_DEV_CREATE) != 0) {
    ::close(fd_);
    throw Error(Errc::CaptureDenied, "cannot create the virtual keyboard");
  }
  sleep_us(200'000);  // let the display server pick the device up
}

UinputSink::~UinputSink() {
  if (fd_ >= 0) {
    ::ioctl(fd_, UI_DEV_DESTROY);
    ::close(fd_);
  }
}

void UinputSink::emit(int type, int code, int value) {
  input_event ev{};
  ev.type = static_cast<__u16>(type);
  ev.code = static_cast<__u16>(code);
  ev.value = value;
  if (::write(fd_, &ev, sizeof(ev)) != static_cast<ssize_t>(sizeof(ev)))
    throw Error(Errc::CaptureDenied, "virtual keyboard write failed");
}

void UinputSink::tap(int keycode, bool shift, bool ctrl, bool alt) {
  auto mod = [&](bool on, int key, int value) {
    if (on) emit(EV_KEY, key, value);
  };
  mod(ctrl, KEY_LEFTCTRL, 1);
  mod(alt, KEY_LEFTALT, 1);
  mod(shift, KEY_LEFTSHIFT, 1);
  emit(EV_KEY, keycode, 1);
  emit(EV_SYN, SYN_REPORT, 0);
  emit(EV_KEY, keycode, 0);
  mod(shift, KEY_LEFTSHIFT, 0);
  mod(alt, KEY_LEFTALT, 0);
  mod(ctrl, KEY_LEFTCTRL, 0);
  emit(EV_SYN, SYN_REPORT, 0);
  sleep_us(timing_.min_emit_gap_us);
}

void UinputSink::type_text(std::string_view text) {
  for (const auto& ch : utf8_chars(text)) {
    auto s = stroke_for_char(ch);
    if (!s) throw Error(Errc::BadRequest, "cannot type character on a US layout");
    tap(s->keycode, s->shift);
  }
}

void UinputSink::backspace(std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) tap(KEY_BACKSPACE, false);
}

void UinputSink::forward(const KeyEvent& chord) {
  auto k = keycode_for_name(chord.code);
  if (!k) return;
  tap(*k, chord.mods.shift, chord.mods.ctrl, chord.mods.alt);
}

// XclipSelection -------------------------------------------------------------------------

std::string XclipSelection::selection() {
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen("xclip -o -selection primary 2>/dev/null", "r"), ::pclose);
  if (!pipe) throw Error(Errc::EmptySelection, "xclip is not available");
  std::string out;
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe.get())) out.append(buf.data(), n);
  if (out.empty()) throw Error(Errc::EmptySelection, "nothing is selected");
  return out;
}

}  // namespace textguard::io::linux_input
