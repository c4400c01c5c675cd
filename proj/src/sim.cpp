#include "textguard/sim.hpp"

#include <stdlib.h>

#include <algorithm>
#include <random>
#include <regex>

#include "textguard/dev_api.hpp"
#include "textguard/error.hpp"
#include "textguard/token_codec.hpp"

namespace textguard::sim {

using nlohmann::json;

// Desk ------------------------------------------------------------------------------

Desk::Desk(std::string id, const std::filesystem::path& root, directory::DirectoryClient* directory,
           std::uint64_t seed, io::VirtualClock& clock, DeskOptions options)
    : id_(std::move(id)),
      clock_(clock),
      entropy_(seed),
      store_(store::Store::init(root, std::nullopt, entropy_, options.one_time_prekeys)),
      messenger_(store_, directory, entropy_, options.messenger),
      sink_(clock_, app_, options.interceptor.timing),
      interceptor_(messenger_, capture_, sink_, selection_, gui_, options.interceptor) {}

void Desk::key(const io::KeyEvent& ev) {
  if (interceptor_.watch(ev) == KeyDisposition::PassThrough) {
    const bool printable = ev.action == io::KeyAction::Down && io::key_text(ev).has_value();
    raw_log_.push_back({ev.timestamp_us, io::chord_name(ev), printable, interceptor_.mode(), capture_.held()});
    app_.raw(ev);
  }
  pump();
}

void Desk::pump() {
  for (auto frames = gui_.drain(); !frames.empty(); frames = gui_.drain())
    for (const auto& f : frames) interceptor_.on_gui_frame(f, clock_.now());
}

void Desk::fire_timer() {
  const auto before = interceptor_.flushes().size();
  interceptor_.on_timer(clock_.now());
  pump();
  if (interceptor_.flushes().size() != before && app_.textbox() != interceptor_.emitted_token())
    flush_breaches_.push_back("textbox differs from the token after the flush at " +
                              std::to_string(clock_.now()));
}

// World ------------------------------------------------------------------------------

World::World(std::uint64_t seed) : seed_(seed) {
  std::string tmpl = (std::filesystem::temp_directory_path() / "textguard-sim-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw Error(Errc::StoreUnavailable, "cannot create a simulation directory");
  root_ = tmpl;
}

World::~World() {
  desks_.clear();
  std::error_code ec;
  std::filesystem::remove_all(root_, ec);
}

Desk& World::add(const std::string& id, DeskOptions options) {
  const std::uint64_t seed = seed_ * 1000003u + desks_.size() + 1;
  desks_.push_back(std::make_unique<Desk>(id, root_ / std::to_string(desks_.size()), &client_, seed, clock_,
                                          std::move(options)));
  desks_.back()->messenger().publish(id);
  return *desks_.back();
}

Desk& World::desk(const std::string& id) {
  for (auto& d : desks_)
    if (d->id() == id) return *d;
  throw Error(Errc::SpecError, "unknown participant " + id);
}

void World::advance_to(std::int64_t t) {
  while (true) {
    Desk* due = nullptr;
    std::int64_t when = 0;
    for (auto& d : desks_) {
      auto dl = d->interceptor().deadline();
      if (dl && *dl <= t && (!due || *dl < when)) {
        due = d.get();
        when = *dl;
      }
    }
    if (!due) break;
    clock_.advance_to(std::max(when, clock_.now()));
    due->fire_timer();
  }
  clock_.advance_to(std::max(t, clock_.now()));
}

void World::press(Desk& desk, const std::string& chord) {
  auto ev = io::parse_chord(chord);
  ev.timestamp_us = clock_.now();
  advance_to(ev.timestamp_us);
  desk.key(ev);
  ev.action = io::KeyAction::Up;
  ev.timestamp_us += 10'000;
  advance_to(ev.timestamp_us);
  desk.key(ev);
}

void World::type(Desk& desk, std::string_view text, std::int64_t gap_us) {
  play(desk, io::events_for_text(text, 0, gap_us));
  advance_to(clock_.now() + gap_us / 2);
}

void World::play(Desk& desk, const std::vector<io::KeyEvent>& events) {
  const std::int64_t base = clock_.now();
  for (auto ev : events) {
    ev.timestamp_us += base;
    advance_to(ev.timestamp_us);
    desk.key(ev);
  }
}

std::vector<std::string> make_markers(std::uint64_t seed, std::size_t count) {
  static constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  std::mt19937_64 rng(seed ^ 0x6d61726b657273ull);
  std::vector<std::string> out(count);
  for (auto& m : out)
    for (int i = 0; i < 32; ++i) m.push_back(kAlphabet[rng() % kAlphabet.size()]);
  return out;
}

// Scenario runner ----------------------------------------------------------------------

namespace {

struct RelayEntry {
  std::string from;
  std::string to;
  std::string text;
  std::string delivered;
  std::string note;
};

std::optional<Bytes> token_blob(const std::string& token_text) {
  const auto a = codec::kGuardStart.size();
  const auto b = codec::kGuardEnd.size();
  if (token_text.size() < a + b) return std::nullopt;
  return codec::base64_decode(std::string_view(token_text).substr(a, token_text.size() - a - b));
}

std::string status_name(const json& items) {
  if (!items.is_array() || items.empty()) return "nothing";
  return items[0].value("status", "nothing");
}

class Runner {
 public:
  Runner(std::uint64_t seed, RunOptions options) : world_(seed), options_(options) {}

  World& world() { return world_; }

  void participant(const std::string& id, bool cache) {
    DeskOptions opts;
    opts.messenger.cache_on_receive = cache;
    opts.interceptor.negative_control_disable_cipher = options_.negative_control;
    world_.add(id, opts);
    inbox_[id];
    sent_[id];
  }

  void set_relay(const json& relay) {
    if (relay.is_null()) return;
    if (!relay.is_object()) throw Error(Errc::SpecError, "relay must be an object");
    relay_mode_ = relay.value("mode", "faithful");
    if (relay_mode_ != "faithful" && relay_mode_ != "tamper" && relay_mode_ != "replay")
      throw Error(Errc::SpecError, "unknown relay mode " + relay_mode_);
    relay_message_ = relay.value("message", 0);
    relay_bit_ = relay.value("bit", 0);
  }

  void use_markers(std::vector<std::string> markers) { markers_ = std::move(markers); }
  void watch_plaintext(std::string text) { secrets_.push_back(std::move(text)); }

  std::string subst(const std::string& text) {
    static const std::regex kMarker(R"(\$MARKER(\d+))");
    std::string out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), kMarker);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      const auto n = std::stoul((*it)[1].str());
      if (n >= markers_.size()) throw Error(Errc::SpecError, "marker index too large");
      out += text.substr(last, it->position() - last);
      out += markers_[n];
      if (std::find(secrets_.begin(), secrets_.end(), markers_[n]) == secrets_.end()) secrets_.push_back(markers_[n]);
      last = it->position() + it->length();
    }
    out += text.substr(last);
    return out;
  }

  void step(const json& s, std::size_t index) {
    if (!s.is_object() || !s.contains("action") || !s["action"].is_string())
      throw Error(Errc::SpecError, "step " + std::to_string(index) + " has no action");
    const std::string action = s["action"];
    if (action == "wait") {
      if (!s.contains("ms") || !s["ms"].is_number() || s["ms"].get<double>() < 0)
        throw Error(Errc::SpecError, "step " + std::to_string(index) + ": wait needs a non-negative ms");
      world_.wait_us(static_cast<std::int64_t>(s["ms"].get<double>() * 1000));
      return;
    }
    if (!s.contains("at") || !s["at"].is_string())
      throw Error(Errc::SpecError, "step " + std::to_string(index) + " needs \"at\"");
    Desk& d = world_.desk(s["at"]);
    const auto gap = static_cast<std::int64_t>(s.value("gap_ms", 80.0) * 1000);

    if (action == "contact_add") {
      d.messenger().add_contact(str(s, "contact"));
    } else if (action == "shortcut") {
      world_.press(d, str(s, "chord"));
    } else if (action == "keys") {
      if (!s.contains("chords") || !s["chords"].is_array()) throw Error(Errc::SpecError, "keys needs chords");
      for (const auto& c : s["chords"]) {
        world_.press(d, c.get<std::string>());
        world_.wait_us(gap);
      }
    } else if (action == "gui_pick") {
      d.gui().pick(str(s, "contact"), s.value("mode", "v1"), s.value("add", false));
      d.pump();
    } else if (action == "type") {
      world_.type(d, subst(str(s, "text")), gap);
    } else if (action == "submit") {
      d.gui().submit(subst(str(s, "text")));
      d.pump();
    } else if (action == "cancel") {
      d.gui().cancel();
      d.pump();
    } else if (action == "dev_api") {
      if (!s.contains("request")) throw Error(Errc::SpecError, "dev_api needs request");
      const std::string line = s["request"].is_string() ? s["request"].get<std::string>() : s["request"].dump();
      auto response = json::parse(devapi::handle_request(d.interceptor(), line, world_.clock().now()));
      d.pump();
      dev_api_.push_back({{"at", d.id()}, {"request", line}, {"response", response}});
      if (s.contains("expect")) {
        const std::string want = s["expect"];
        const std::string got = response.value("status", "") == "ok" ? "ok" : response.value("code", "");
        expect(index, got == want, "dev_api answered " + got + ", expected " + want);
      }
    } else if (action == "send") {
      send(d, str(s, "to"), index);
    } else if (action == "decrypt" || action == "select_own_and_decrypt") {
      const bool own = action == "select_own_and_decrypt";
      const auto& box = own ? sent_[d.id()] : inbox_[d.id()];
      if (box.empty()) throw Error(Errc::SpecError, d.id() + " has nothing to select");
      const std::size_t n = s.contains("message") ? s["message"].get<std::size_t>() : box.size() - 1;
      if (n >= box.size()) throw Error(Errc::SpecError, "no message " + std::to_string(n));
      std::optional<std::string> sender;
      if (!own && s.contains("sender") && s["sender"].is_string()) sender = s["sender"].get<std::string>();
      decrypt(d, box[n], sender, n, s, index);
    } else if (action == "encrypt") {
      const std::string mode = s.value("mode", "v1");
      const std::string to = str(s, "to");
      world_.press(d, "ctrl+alt+e");
      d.gui().pick(to, mode);
      d.pump();
      world_.type(d, subst(str(s, "text")), gap);
      if (mode == "v1") world_.wait_us(400'000);
      world_.press(d, "ctrl+alt+e");
      world_.wait_us(100'000);
      send(d, to, index);
    } else {
      throw Error(Errc::SpecError, "unknown action " + action);
    }
  }

  void send(Desk& d, const std::string& to, std::size_t index) {
    world_.desk(to);  // validates
    // The sink may have queued emissions slightly ahead of the clock.
    world_.advance_to(std::max(world_.clock().now(), d.app().last_t()) + 1000);
    const std::string text = d.app().send(world_.clock().now());
    check_quiescent(d, text, index);

    RelayEntry e{d.id(), to, text, text, ""};
    const std::size_t k = relay_.size();
    if (relay_mode_ == "tamper" && static_cast<std::size_t>(relay_message_) == k) {
      e.delivered = flip(text);
      e.note = "tampered";
    }
    relay_.push_back(e);
    sent_[d.id()].push_back(text);
    inbox_[to].push_back(e.delivered);
    if (relay_mode_ == "replay" && static_cast<std::size_t>(relay_message_) == k) {
      relay_.push_back({d.id(), to, text, text, "replayed"});
      inbox_[to].push_back(text);
    }
  }

  std::string flip(const std::string& text) {
    auto items = codec::scan_tokens(text);
    if (items.empty() || !std::holds_alternative<codec::WireToken>(items[0]))
      throw Error(Errc::SpecError, "tamper target holds no token");
    auto blob = token_blob(std::get<codec::WireToken>(items[0]).text);
    auto bit = static_cast<std::size_t>(relay_bit_) % (blob->size() * 8);
    (*blob)[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    return std::string(codec::kGuardStart) + codec::base64_encode(*blob) + std::string(codec::kGuardEnd);
  }

  void check_quiescent(Desk& d, const std::string& text, std::size_t index) {
    json entry = {{"at", d.id()}, {"step", index}};
    auto items = codec::scan_tokens(text);
    bool ok = items.size() == 1 && std::holds_alternative<codec::WireToken>(items[0]) &&
              std::get<codec::WireToken>(items[0]).text == text;
    entry["one_token"] = ok;
    const auto& done = d.interceptor().completed();
    if (ok && !done.empty() && done.back().text == text) {
      auto cached = d.store().cache_get(store::token_hash(text));
      const bool match = cached && *cached == d.gui().closed_mirror();
      entry["cache_matches_mirror"] = match;
      ok = ok && match;
    }
    entry["pass"] = ok;
    quiescence_.push_back(entry);
  }

  void decrypt(Desk& d, const std::string& selected, const std::optional<std::string>& sender, std::size_t n,
               const json& s, std::size_t index) {
    d.selection().stage(selected);
    d.gui().auto_sender(sender);
    const auto frames_before = d.gui().received().size();
    const auto notices_before = d.interceptor().notices().size();
    world_.press(d, "ctrl+alt+u");
    d.selection().clear();
    json items = json::array();
    const auto& frames = d.gui().received();
    for (std::size_t i = frames_before; i < frames.size(); ++i)
      if (frames[i].kind == gui::FrameKind::ShowDecrypted) items = frames[i].payload.value("items", json::array());
    json notes = json::array();
    const auto& ns = d.interceptor().notices();
    for (std::size_t i = notices_before; i < ns.size(); ++i) notes.push_back(to_string(ns[i].code));
    decrypts_.push_back({{"at", d.id()}, {"message", n}, {"items", items}, {"notices", notes}});

    if (s.contains("expect")) {
      const std::string want = s["expect"];
      std::string got = status_name(items);
      if (items.empty() && !notes.empty()) got = notes.back().get<std::string>();
      expect(index, got == want, d.id() + " decrypt gave " + got + ", expected " + want);
    }
    if (s.contains("text")) {
      const std::string want = subst(s["text"]);
      const bool ok = !items.empty() && items[0].value("text", "") == want;
      expect(index, ok, d.id() + " decrypt text mismatch");
    }
  }

  void expect(std::size_t index, bool ok, const std::string& detail) {
    expectations_.push_back({{"step", index}, {"pass", ok}, {"detail", ok ? "" : detail}});
  }

  json report(const std::string& name, std::uint64_t seed) {
    json r;
    r["name"] = name;
    r["seed"] = seed;
    r["negative_control"] = options_.negative_control;

    json relay = json::array();
    for (const auto& e : relay_) {
      json j = {{"from", e.from}, {"to", e.to}, {"text", e.text}};
      if (e.delivered != e.text) j["delivered"] = e.delivered;
      if (!e.note.empty()) j["note"] = e.note;
      relay.push_back(j);
    }
    r["relay"] = relay;

    json apps = json::object();
    json notices = json::object();
    for (const auto& d : world_.desks()) {
      json ev = json::array();
      for (const auto& e : d->app().events())
        ev.push_back({{"t_us", e.t_us}, {"what", e.what}, {"synthetic", e.synthetic}});
      apps[d->id()] = ev;
      json ns = json::array();
      for (const auto& n : d->interceptor().notices())
        ns.push_back({{"t_us", n.t_us}, {"code", to_string(n.code)}, {"message", n.message}});
      notices[d->id()] = ns;
    }
    r["apps"] = apps;
    r["notices"] = notices;
    r["decrypts"] = decrypts_;
    r["dev_api"] = dev_api_;
    r["quiescence"] = quiescence_;
    r["expectations"] = expectations_;

    json verdicts;
    verdicts["confidentiality"] = confidentiality();
    verdicts["exclusivity"] = exclusivity();
    verdicts["pacing"] = pacing();
    verdicts["debounce"] = debounce();
    bool q = std::all_of(quiescence_.begin(), quiescence_.end(), [](const json& j) { return j["pass"].get<bool>(); });
    json breaches = json::array();
    for (const auto& d : world_.desks())
      for (const auto& b : d->flush_breaches()) breaches.push_back(d->id() + ": " + b);
    verdicts["quiescence"] = {{"pass", q && breaches.empty()}, {"flush_breaches", breaches}};
    bool e = std::all_of(expectations_.begin(), expectations_.end(),
                         [](const json& j) { return j["pass"].get<bool>(); });
    verdicts["expectations"] = {{"pass", e}};
    r["verdicts"] = verdicts;

    bool pass = true;
    for (const auto& [k, v] : verdicts.items()) pass = pass && v["pass"].get<bool>();
    r["pass"] = pass;
    return r;
  }

 private:
  static std::string str(const json& s, const char* key) {
    if (!s.contains(key) || !s[key].is_string()) throw Error(Errc::SpecError, std::string("missing ") + key);
    return s[key].get<std::string>();
  }

  json confidentiality() {
    // Everything the app and the server could observe, including the
    // decoded bytes inside every token they carried.
    std::vector<std::pair<std::string, std::string>> views;
    for (const auto& d : world_.desks()) {
      std::string typed;
      for (const auto& e : d->app().events())
        if (e.what.size() <= 4 && io::utf8_chars(e.what).size() == 1) typed += e.what;
      views.emplace_back("app:" + d->id(), typed);
    }
    for (std::size_t i = 0; i < relay_.size(); ++i) {
      const auto tag = "relay:" + std::to_string(i);
      views.emplace_back(tag, relay_[i].text);
      views.emplace_back(tag + ":delivered", relay_[i].delivered);
      std::size_t j = 0;
      for (const auto& item : codec::scan_tokens(relay_[i].text)) {
        if (const auto* t = std::get_if<codec::WireToken>(&item))
          if (auto blob = token_blob(t->text)) views.emplace_back(tag + ":token" + std::to_string(j), as_string(*blob));
        ++j;
      }
    }
    for (std::size_t m = 0; m < secrets_.size(); ++m) {
      if (secrets_[m].empty()) continue;
      for (const auto& [where, text] : views) {
        const auto at = text.find(secrets_[m]);
        if (at != std::string::npos)
          return {{"pass", false}, {"marker", m}, {"where", where}, {"offset", at}};
      }
    }
    return {{"pass", true}, {"markers_checked", secrets_.size()}};
  }

  json exclusivity() {
    for (const auto& d : world_.desks())
      for (const auto& r : d->raw_log()) {
        const bool capturing = r.capture_held || r.mode == Mode::SelectingRecipient ||
                               r.mode == Mode::EncryptingV1 || r.mode == Mode::EncryptingV2;
        if (r.printable && capturing)
          return {{"pass", false}, {"at", d->id()}, {"t_us", r.t_us}, {"what", r.what}};
      }
    return {{"pass", true}};
  }

  json pacing() {
    std::optional<std::int64_t> min_gap;
    for (const auto& d : world_.desks()) {
      std::optional<std::int64_t> last;
      for (const auto& e : d->app().events()) {
        if (!e.synthetic) continue;
        if (last) min_gap = std::min(min_gap.value_or(e.t_us - *last), e.t_us - *last);
        last = e.t_us;
      }
    }
    const std::int64_t floor = io::TimingPolicy{}.min_emit_gap_us;
    return {{"pass", !min_gap || *min_gap >= floor}, {"min_gap_us", min_gap ? json(*min_gap) : json(nullptr)}};
  }

  json debounce() {
    std::optional<std::int64_t> min_silence;
    std::size_t count = 0;
    for (const auto& d : world_.desks())
      for (const auto& f : d->interceptor().flushes()) {
        if (f.final) continue;
        ++count;
        const auto silence = f.flush_us - f.last_input_us;
        min_silence = std::min(min_silence.value_or(silence), silence);
      }
    const std::int64_t floor = io::TimingPolicy{}.flush_debounce_us;
    return {{"pass", !min_silence || *min_silence >= floor},
            {"flushes", count},
            {"min_silence_us", min_silence ? json(*min_silence) : json(nullptr)}};
  }

  World world_;
  RunOptions options_;
  std::string relay_mode_ = "faithful";
  int relay_message_ = 0;
  int relay_bit_ = 0;
  std::vector<std::string> markers_;
  std::vector<std::string> secrets_;
  std::map<std::string, std::vector<std::string>> inbox_;
  std::map<std::string, std::vector<std::string>> sent_;
  std::vector<RelayEntry> relay_;
  json decrypts_ = json::array();
  json dev_api_ = json::array();
  json quiescence_ = json::array();
  json expectations_ = json::array();
};

}  // namespace

json run_scenario(const json& scenario, const RunOptions& options) {
  if (!scenario.is_object()) throw Error(Errc::SpecError, "scenario must be an object");
  const auto seed = scenario.value("seed", std::uint64_t{1});
  const std::string name = scenario.value("name", "scenario");
  Runner runner(seed, options);
  runner.use_markers(make_markers(seed, 16));
  if (!scenario.contains("participants") || !scenario["participants"].is_array())
    throw Error(Errc::SpecError, "participants must be a list");
  for (const auto& p : scenario["participants"]) {
    if (!p.is_object() || !p.contains("id") || !p["id"].is_string())
      throw Error(Errc::SpecError, "participant needs an id");
    runner.participant(p["id"], p.value("cache", true));
  }
  runner.set_relay(scenario.value("relay", json()));
  const json steps = scenario.value("steps", json::array());
  if (!steps.is_array()) throw Error(Errc::SpecError, "steps must be a list");
  try {
    for (std::size_t i = 0; i < steps.size(); ++i) runner.step(steps[i], i);
  } catch (const json::exception& e) {
    throw Error(Errc::SpecError, e.what());
  }
  return runner.report(name, seed);
}

json run_key_script(const std::vector<io::KeyEvent>& events, std::uint64_t seed, const RunOptions& options) {
  Runner runner(seed, options);
  runner.participant("alice", true);
  runner.participant("bob", true);
  auto& w = runner.world();
  Desk& alice = w.desk("alice");
  alice.messenger().add_contact("bob");
  alice.gui().auto_pick("bob", "v1");
  w.play(alice, events);
  w.wait_us(400'000);
  if (alice.interceptor().mode() == Mode::EncryptingV1 || alice.interceptor().mode() == Mode::EncryptingV2)
    w.press(alice, "ctrl+alt+e");
  w.wait_us(100'000);
  // The typed plaintext is the secret to look for; very short text could
  // match token characters by chance, so it is only checked from 12 bytes.
  const std::string typed = alice.gui().closed_mirror();
  if (typed.size() >= 12) runner.watch_plaintext(typed);
  runner.step({{"at", "alice"}, {"action", "send"}, {"to", "bob"}}, 0);
  runner.step({{"at", "bob"}, {"action", "decrypt"}, {"sender", "alice"}, {"expect", "displayed"}, {"text", typed}}, 1);
  return runner.report("key_script", seed);
}

}  // namespace textguard::sim
