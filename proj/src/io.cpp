#include "textguard/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <utility>

#include "textguard/error.hpp"

namespace textguard::io {

namespace {

// US layout: shifted punctuation and the key that produces it.
constexpr std::array<std::pair<char, char>, 21> kShifted = {{
    {'!', '1'}, {'@', '2'}, {'#', '3'}, {'$', '4'}, {'%', '5'}, {'^', '6'}, {'&', '7'},
    {'*', '8'}, {'(', '9'}, {')', '0'}, {'_', '-'}, {'+', '='}, {'{', '['}, {'}', ']'},
    {'|', '\\'}, {':', ';'}, {'"', '\''}, {'<', ','}, {'>', '.'}, {'?', '/'}, {'~', '`'},
}};

constexpr std::array<std::string_view, 27> kNamedKeys = {
    "space", "enter", "tab", "backspace", "escape", "left", "right", "up", "down",
    "home", "end", "delete", "ctrl", "alt", "shift", "f1", "f2", "f3", "f4", "f5",
    "f6", "f7", "f8", "f9", "f10", "f11", "f12"};

bool is_named(std::string_view code) {
  return std::find(kNamedKeys.begin(), kNamedKeys.end(), code) != kNamedKeys.end();
}

std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;
}

bool valid_code(std::string_view code) {
  if (is_named(code)) return true;
  auto chars = utf8_chars(code);
  if (chars.size() != 1) return false;
  unsigned char c = static_cast<unsigned char>(code[0]);
  return c >= 0x21 && c != 0x7f;
}

void pop_last_char(std::string& s) {
  if (s.empty()) return;
  std::size_t i = s.size() - 1;
  while (i > 0 && (static_cast<unsigned char>(s[i]) & 0xc0) == 0x80) --i;
  s.erase(i);
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_len(static_cast<unsigned char>(text[i]));
    bool ok = i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k)
      ok = (static_cast<unsigned char>(text[i + k]) & 0xc0) == 0x80;
    if (!ok) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string chord_name(const KeyEvent& ev) {
  std::string out;
  if (ev.mods.ctrl) out += "ctrl+";
  if (ev.mods.alt) out += "alt+";
  if (ev.mods.shift) out += "shift+";
  return out + ev.code;
}

KeyEvent parse_chord(std::string_view chord) {
  KeyEvent ev;
  std::string_view rest = chord;
  for (;;) {
    auto plus = rest.find('+');
    // A trailing '+' is the key itself ("ctrl++").
    if (plus == std::string_view::npos || plus + 1 == rest.size()) break;
    auto part = rest.substr(0, plus);
    if (part == "ctrl") ev.mods.ctrl = true;
    else if (part == "alt") ev.mods.alt = true;
    else if (part == "shift") ev.mods.shift = true;
    else throw Error(Errc::BadRequest, "unknown modifier in chord: " + std::string(chord));
    rest = rest.substr(plus + 1);
  }
  ev.code = std::string(rest);
  if (!valid_code(ev.code)) throw Error(Errc::BadRequest, "unknown key in chord: " + std::string(chord));
  return ev;
}

bool is_modifier_key(std::string_view code) { return code == "ctrl" || code == "alt" || code == "shift"; }

std::optional<std::string> key_text(const KeyEvent& ev) {
  if (ev.action != KeyAction::Down || ev.mods.ctrl || ev.mods.alt) return std::nullopt;
  if (ev.code == "space") return " ";
  if (ev.code == "enter") return "\n";
  if (ev.code == "tab") return "\t";
  if (is_named(ev.code)) return std::nullopt;
  if (ev.code.size() == 1 && ev.mods.shift) {
    char c = ev.code[0];
    if (c >= 'a' && c <= 'z') return std::string(1, static_cast<char>(c - 'a' + 'A'));
    for (auto [shifted, base] : kShifted)
      if (base == c) return std::string(1, shifted);
  }
  return ev.code;
}

std::vector<KeyEvent> events_for_text(std::string_view text, std::int64_t t0_us, std::int64_t gap_us) {
  std::vector<KeyEvent> out;
  std::int64_t t = t0_us;
  for (const auto& ch : utf8_chars(text)) {
    KeyEvent ev;
    ev.timestamp_us = t;
    if (ch == " ") ev.code = "space";
    else if (ch == "\n") ev.code = "enter";
    else if (ch == "\t") ev.code = "tab";
    else if (ch.size() == 1 && ch[0] >= 'A' && ch[0] <= 'Z') {
      ev.code = std::string(1, static_cast<char>(ch[0] - 'A' + 'a'));
      ev.mods.shift = true;
    } else {
      ev.code = ch;
      for (auto [shifted, base] : kShifted)
        if (ch.size() == 1 && ch[0] == shifted) {
          ev.code = std::string(1, base);
          ev.mods.shift = true;
        }
    }
    out.push_back(ev);
    KeyEvent up = ev;
    up.action = KeyAction::Up;
    up.timestamp_us = t + gap_us / 2;
    out.push_back(up);
    t += gap_us;
  }
  return out;
}

std::string event_to_jsonl(const KeyEvent& ev) {
  nlohmann::json mods = nlohmann::json::array();
  if (ev.mods.ctrl) mods.push_back("ctrl");
  if (ev.mods.alt) mods.push_back("alt");
  if (ev.mods.shift) mods.push_back("shift");
  nlohmann::json j = {{"t_us", ev.timestamp_us},
                      {"key", ev.code},
                      {"action", ev.action == KeyAction::Down ? "down" : "up"},
                      {"mods", mods}};
  return j.dump();
}

std::vector<KeyEvent> read_jsonl(std::istream& in) {
  std::vector<KeyEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) -> KeyEvent {
      throw Error(Errc::BadRequest, "line " + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail("not JSON");
    }
    if (!j.is_object() || !j.contains("t_us") || !j["t_us"].is_number_integer() || !j.contains("key") ||
        !j["key"].is_string())
      fail("expected t_us and key");
    KeyEvent ev;
    ev.timestamp_us = j["t_us"].get<std::int64_t>();
    ev.code = j["key"].get<std::string>();
    if (!valid_code(ev.code)) fail("unknown key " + ev.code);
    const std::string action = j.value("action", "down");
    if (action == "down") ev.action = KeyAction::Down;
    else if (action == "up") ev.action = KeyAction::Up;
    else fail("bad action " + action);
    if (j.contains("mods")) {
      if (!j["mods"].is_array()) fail("mods must be a list");
      for (const auto& m : j["mods"]) {
        const std::string name = m.is_string() ? m.get<std::string>() : "";
        if (name == "ctrl") ev.mods.ctrl = true;
        else if (name == "alt") ev.mods.alt = true;
        else if (name == "shift") ev.mods.shift = true;
        else fail("bad modifier");
      }
    }
    if (!out.empty() && ev.timestamp_us < out.back().timestamp_us)
      throw Error(Errc::ClockError, "line " + std::to_string(lineno) + ": timestamp goes backwards");
    out.push_back(std::move(ev));
  }
  return out;
}

// Simulation ------------------------------------------------------------------

void VirtualClock::advance_to(std::int64_t t) {
  if (t < now_)
    throw Error(Errc::ClockError, "time regression: " + std::to_string(t) + " < " + std::to_string(now_));
  now_ = t;
}

void AppTranscript::append(AppEvent ev) {
  ev.t_us = std::max(ev.t_us, last_t_);
  last_t_ = ev.t_us;
  if (ev.what == "backspace")
    pop_last_char(textbox_);
  else if (ev.what == "send")
    textbox_.clear();
  else if (utf8_chars(ev.what).size() == 1 && !is_named(ev.what))
    textbox_ += ev.what;
  events_.push_back(std::move(ev));
}

void AppTranscript::raw(const KeyEvent& ev) {
  if (ev.action != KeyAction::Down || is_modifier_key(ev.code)) return;
  // Ctrl+Alt chords are the daemon's global shortcuts; apps ignore them.
  if (ev.mods.ctrl && ev.mods.alt) return;
  if (auto text = key_text(ev)) {
    append({ev.timestamp_us, *text, false});
  } else if (ev.code == "backspace" && !ev.mods.ctrl && !ev.mods.alt) {
    append({ev.timestamp_us, "backspace", false});
  } else {
    append({ev.timestamp_us, chord_name(ev), false});
  }
}

void AppTranscript::synthetic_char(std::int64_t t, std::string ch) { append({t, std::move(ch), true}); }

void AppTranscript::synthetic_backspace(std::int64_t t) { append({t, "backspace", true}); }

void AppTranscript::synthetic_chord(std::int64_t t, const KeyEvent& chord) {
  append({t, chord_name(chord), true});
}

std::string AppTranscript::send(std::int64_t t) {
  std::string out = textbox_;
  append({t, "send", false});
  return out;
}

std::string AppTranscript::fold(const std::vector<AppEvent>& events) {
  AppTranscript t;
  for (const auto& e : events) t.append(e);
  return t.textbox();
}

void SimCapture::acquire() {
  if (deny_) throw Error(Errc::CaptureDenied, "keyboard is grabbed by another process");
  held_ = true;
}

std::int64_t SimSink::next_slot() {
  std::int64_t t = std::max(clock_.now(), app_.last_t());
  if (last_) t = std::max(t, *last_ + timing_.min_emit_gap_us);
  last_ = t;
  ++emitted_;
  return t;
}

void SimSink::type_text(std::string_view text) {
  for (auto& ch : utf8_chars(text)) app_.synthetic_char(next_slot(), ch);
}

void SimSink::backspace(std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) app_.synthetic_backspace(next_slot());
}

void SimSink::forward(const KeyEvent& chord) { app_.synthetic_chord(next_slot(), chord); }

std::string SimSelection::selection() {
  if (!staged_ || staged_->empty()) throw Error(Errc::EmptySelection, "nothing is selected");
  return *staged_;
}

}  // namespace textguard::io
