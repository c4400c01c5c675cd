// textguard: command-line front end for the daemon, the store and the
// simulator.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>

#include "textguard/daemon.hpp"
#include "textguard/directory.hpp"
#include "textguard/error.hpp"
#include "textguard/fsutil.hpp"
#include "textguard/messenger.hpp"
#include "textguard/sim.hpp"
#include "textguard/stream_cipher.hpp"
#include "textguard/token_codec.hpp"
#ifdef TEXTGUARD_HAVE_LINUX_INPUT
#include "textguard/io_linux.hpp"
#endif

namespace tg = textguard;
using nlohmann::json;

namespace {

// Settings ---------------------------------------------------------------------------

using Settings = std::map<std::string, std::string>;

/// key = value lines; '#' starts a comment; values may be quoted.
Settings read_settings(const std::filesystem::path& path) {
  Settings out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw tg::Error(tg::Errc::BadRequest, path.string() + ":" + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[key] = value;
  }
  return out;
}

std::filesystem::path home() {
  const char* h = std::getenv("HOME");
  return h ? h : ".";
}

struct Global {
  std::string store_flag;
  std::string config_flag;
  std::string directory_flag;
  bool json_output = false;

  Settings settings;
  std::filesystem::path store_path;

  void resolve() {
    Settings file;
    std::filesystem::path config = config_flag;
    if (config.empty()) {
      const char* xdg = std::getenv("XDG_CONFIG_HOME");
      config = (xdg ? std::filesystem::path(xdg) : home() / ".config") / "textguard.conf";
    }
    if (!config_flag.empty() && !std::filesystem::exists(config))
      throw tg::Error(tg::Errc::BadRequest, config.string() + ": no such config file");
    file = read_settings(config);

    if (!store_flag.empty())
      store_path = store_flag;
    else if (const char* env = std::getenv("TEXTGUARD_STORE"))
      store_path = env;
    else if (file.count("store"))
      store_path = file["store"];
    else
      store_path = home() / ".textguard";

    // Store-local settings (written by init) sit under the config file.
    settings = read_settings(store_path / "settings.conf");
    for (auto& [k, v] : file) settings[k] = v;
    if (!directory_flag.empty()) settings["directory"] = directory_flag;
  }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = settings.find(key);
    return it == settings.end() ? fallback : it->second;
  }
  long get_int(const std::string& key, long fallback) const {
    auto it = settings.find(key);
    if (it == settings.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw tg::Error(tg::Errc::BadRequest, key + " must be a number");
    }
  }
  std::string user() const {
    auto u = get("user");
    if (u.empty()) throw tg::Error(tg::Errc::BadRequest, "no user id; run init --user <id> or set user in the config");
    return u;
  }
  std::unique_ptr<tg::directory::DirectoryClient> directory() const {
    auto loc = get("directory");
    if (loc.empty()) return nullptr;
    return tg::directory::make_client(loc);
  }
  tg::InterceptorOptions interceptor_options() const {
    tg::InterceptorOptions o;
    o.encrypt_chord = get("encrypt_chord", o.encrypt_chord);
    o.decrypt_chord = get("decrypt_chord", o.decrypt_chord);
    o.timing.min_emit_gap_us = get_int("min_emit_gap_us", o.timing.min_emit_gap_us);
    o.timing.flush_debounce_us = get_int("flush_debounce_us", o.timing.flush_debounce_us);
    return o;
  }
};

Global g;

void print(const json& j, const std::string& human) {
  if (g.json_output)
    std::cout << j.dump() << "\n";
  else if (!human.empty())
    std::cout << human << (human.back() == '\n' ? "" : "\n");
}

std::string read_stdin() {
  return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
}

std::string hex_prefix(const tg::Key32& k) { return tg::to_hex(k).substr(0, 16); }

// Commands -----------------------------------------------------------------------------

int cmd_init(const std::string& user, std::size_t prekeys, bool publish) {
  if (!tg::store::valid_contact_id(user)) throw tg::Error(tg::Errc::BadRequest, "invalid user id");
  auto store = tg::store::Store::init(g.store_path, std::nullopt, tg::crypto::system_entropy(), prekeys);
  tg::fs::write_file_atomic(g.store_path / "settings.conf", tg::as_bytes("user = " + user + "\n"));
  g.settings["user"] = user;
  json out = {{"store", g.store_path.string()}, {"user", user},
              {"identity", tg::to_hex(store.identity().public_key)}};
  std::string human = "initialized " + g.store_path.string() + " for " + user;
  if (publish) {
    auto dir = g.directory();
    tg::Messenger m(store, dir.get());
    m.publish(user);
    out["published"] = true;
    human += " (published)";
  }
  print(out, human);
  return 0;
}

int cmd_contact_add(const std::string& id) {
  auto store = tg::store::Store::open(g.store_path);
  auto dir = g.directory();
  tg::Messenger m(store, dir.get());
  auto update = m.add_contact(id);
  auto c = store.contact(id);
  const char* what = update == tg::store::ContactUpdate::Added       ? "added"
                     : update == tg::store::ContactUpdate::Unchanged ? "unchanged"
                                                                     : "key_changed";
  json out = {{"contact", id}, {"result", what}, {"identity", tg::to_hex(c->identity_pub)}};
  std::string human = std::string(what) + " " + id + " " + hex_prefix(c->identity_pub);
  if (update == tg::store::ContactUpdate::KeyChanged) {
    out["pending_identity"] = tg::to_hex(*c->pending_identity);
    human += "\nwarning: the directory now holds a different key (" + hex_prefix(*c->pending_identity) +
             "); run `contact verify " + id + "` after checking it";
  }
  print(out, human);
  return update == tg::store::ContactUpdate::KeyChanged ? 4 : 0;
}

int cmd_contact_list() {
  auto store = tg::store::Store::open(g.store_path);
  json arr = json::array();
  std::ostringstream human;
  for (const auto& c : store.contacts()) {
    json j = {{"contact", c.contact_id}, {"identity", tg::to_hex(c.identity_pub)}, {"verified", c.verified},
              {"session", store.has_session(c.contact_id)}};
    if (c.pending_identity) j["pending_identity"] = tg::to_hex(*c.pending_identity);
    arr.push_back(j);
    human << c.contact_id << "\t" << hex_prefix(c.identity_pub) << "\t" << (c.verified ? "verified" : "unverified")
          << (c.pending_identity ? "\tKEY CHANGED" : "") << "\n";
  }
  print(arr, human.str());
  return 0;
}

int cmd_contact_verify(const std::string& id) {
  auto store = tg::store::Store::open(g.store_path);
  const auto before = store.contact(id);
  store.verify_contact(id);
  const bool adopted = before && before->pending_identity;
  if (adopted) store.delete_session(id);
  print({{"contact", id}, {"verified", true}, {"adopted_new_key", adopted}},
        "verified " + id + (adopted ? " (new key adopted; the next message starts a new session)" : ""));
  return 0;
}

int cmd_keys_publish() {
  auto store = tg::store::Store::open(g.store_path);
  auto dir = g.directory();
  tg::Messenger m(store, dir.get());
  auto user = g.user();
  auto r = m.publish(user);
  print({{"user", user}, {"identity_changed", r.identity_changed}}, "published " + user);
  return 0;
}

int cmd_keys_fetch(const std::string& id) {
  auto dir = g.directory();
  if (!dir) throw tg::Error(tg::Errc::DirectoryUnavailable, "no directory configured");
  auto bundle = dir->fetch_bundle(id);
  auto j = tg::directory::bundle_to_json(bundle);
  print(j, j.dump(2));
  return 0;
}

int cmd_encrypt(const std::string& to, bool v2) {
  auto store = tg::store::Store::open(g.store_path);
  auto dir = g.directory();
  tg::Messenger m(store, dir.get());
  std::string text = read_stdin();
  if (!text.empty() && text.back() == '\n') text.pop_back();
  tg::codec::WireToken token;
  if (v2) {
    token = m.encrypt_message(to, text);
  } else {
    // Same path as live typing: one byte at a time through the pad.
    auto msg = m.begin_outgoing(to);
    tg::stream::KeystreamPad pad(msg.keys);
    tg::stream::ComposeBuffer buf;
    for (unsigned char c : text) tg::stream::encrypt_append(buf, pad, c);
    token = m.seal(msg, buf.ciphertext);
    m.remember_sent(token, text);
    buf.wipe();
    pad.wipe();
    msg.wipe();
  }
  print({{"token", token.text}}, token.text);
  return 0;
}

int cmd_decrypt(const std::optional<std::string>& from) {
  auto store = tg::store::Store::open(g.store_path);
  auto dir = g.directory();
  tg::Messenger m(store, dir.get());
  auto results = m.open_selection(read_stdin(), from);
  json arr = json::array();
  int rc = 0;
  for (const auto& r : results) {
    json j = {{"status", tg::to_string(r.status)}, {"cached", r.from_cache}};
    if (!r.sender.empty()) j["sender"] = r.sender;
    if (r.code) j["code"] = tg::to_string(*r.code);
    if (r.status == tg::DecryptStatus::Displayed) {
      j["text"] = r.plaintext;
      if (!g.json_output) std::cout << r.plaintext << "\n";
    } else {
      rc = 4;
      if (!g.json_output)
        std::cerr << (r.status == tg::DecryptStatus::Unrecoverable ? "unrecoverable: " : "integrity warning: ")
                  << r.detail << "\n";
    }
    arr.push_back(j);
  }
  if (g.json_output) std::cout << arr.dump() << "\n";
  return rc;
}

int cmd_simulate(const std::string& path, bool negative, const std::string& out_path) {
  std::ifstream in(path);
  if (!in) throw tg::Error(tg::Errc::SpecError, path + ": cannot read");
  tg::sim::RunOptions opts;
  opts.negative_control = negative;
  json report;
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") {
    std::vector<tg::io::KeyEvent> events;
    try {
      events = tg::io::read_jsonl(in);
    } catch (const tg::Error& e) {
      throw tg::Error(tg::Errc::SpecError, e.what());
    }
    report = tg::sim::run_key_script(events, 1, opts);
  } else {
    json scenario;
    try {
      scenario = json::parse(in);
    } catch (const json::exception& e) {
      throw tg::Error(tg::Errc::SpecError, path + ": " + e.what());
    }
    report = tg::sim::run_scenario(scenario, opts);
  }
  const std::string text = report.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
  if (!out_path.empty()) {
    std::ofstream(out_path) << text;
  }
  if (g.json_output || out_path.empty()) {
    std::cout << text;
  } else {
    std::cout << report["name"].get<std::string>() << ": " << (report["pass"].get<bool>() ? "pass" : "FAIL") << "\n";
    for (const auto& [k, v] : report["verdicts"].items())
      std::cout << "  " << k << ": " << (v["pass"].get<bool>() ? "pass" : "FAIL") << "\n";
  }
  return report["pass"].get<bool>() ? 0 : 4;
}

int cmd_bench(int samples);

int cmd_directory_serve(const std::string& host, int port, const std::string& persist) {
  std::optional<std::filesystem::path> p;
  if (!persist.empty()) p = persist;
  tg::directory::DirectoryService service(p);
  tg::directory::DirectoryServer server(service);
  std::cerr << "directory listening on http://" << host << ":" << port << "\n";
  server.run(host, port);
  return 0;
}

std::atomic<tg::daemon::Daemon*> g_daemon{nullptr};

int cmd_daemon_run(bool init, const std::string& device, const std::string& headless_recipient) {
  if (init && !tg::store::Store::exists(g.store_path)) cmd_init(g.user(), tg::store::kDefaultOneTimePrekeys, false);
  auto store = tg::store::Store::open(g.store_path);
  auto dir = g.directory();
  tg::Messenger m(store, dir.get());
  if (dir) m.publish(g.user());

  tg::daemon::DaemonConfig cfg;
  cfg.gui_port = static_cast<int>(g.get_int("gui_port", cfg.gui_port));
  cfg.dev_api_port = static_cast<int>(g.get_int("dev_api_port", cfg.dev_api_port));
  cfg.token_file = (g.store_path / "gui.token").string();
  tg::gui::HeadlessGui headless;
  if (!headless_recipient.empty()) {
    headless.auto_pick(headless_recipient, "v1");
    cfg.headless = &headless;
  }

#ifdef TEXTGUARD_HAVE_LINUX_INPUT
  std::string path = device;
  if (path.empty()) {
    auto found = tg::io::linux_input::find_keyboards();
    if (found.empty()) throw tg::Error(tg::Errc::CaptureDenied, "no readable keyboard under /dev/input");
    path = found.front();
  }
  tg::io::linux_input::EvdevKeyboard keyboard(path, [](const tg::io::KeyEvent& ev) {
    if (auto* d = g_daemon.load()) d->post_key(ev);
  });
  tg::io::linux_input::UinputSink sink(g.interceptor_options().timing);
  tg::io::linux_input::XclipSelection selection;
  tg::daemon::Daemon daemon(m, keyboard, sink, selection, g.interceptor_options(), cfg);
  daemon.start();
  g_daemon = &daemon;
  std::cerr << "daemon: keyboard " << path << ", GUI port " << daemon.gui_port() << ", developer API port "
            << daemon.dev_api_port() << "\n";
  ::signal(SIGINT, [](int) {
    if (auto* d = g_daemon.load()) d->stop();
  });
  ::signal(SIGTERM, [](int) {
    if (auto* d = g_daemon.load()) d->stop();
  });
  daemon.run();
  g_daemon = nullptr;
  return 0;
#else
  (void)device;
  throw tg::Error(tg::Errc::CaptureDenied, "built without the Linux input backend (TEXTGUARD_LINUX_INPUT=OFF)");
#endif
}

// Bench ----------------------------------------------------------------------------------

struct Stats {
  double median_us = 0;
  double p95_us = 0;
  double mean_us = 0;
};

Stats stats(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  Stats s;
  s.median_us = v[v.size() / 2];
  s.p95_us = v[std::min(v.size() - 1, v.size() * 95 / 100)];
  double sum = 0;
  for (double x : v) sum += x;
  s.mean_us = sum / static_cast<double>(v.size());
  return s;
}

template <typename F>
double time_us(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

namespace {

int cmd_bench(int samples) {
  tg::sim::World world(42);
  auto& alice = world.add("alice");
  auto& bob = world.add("bob");
  alice.messenger().add_contact("bob");
  bob.messenger().add_contact("alice");

  // Keystroke monitoring while idle.
  std::vector<double> watch;
  auto ev = tg::io::parse_chord("a");
  for (int i = 0; i < samples; ++i) {
    ev.timestamp_us = world.clock().now();
    watch.push_back(time_us([&] { alice.interceptor().watch(ev); }));
  }

  // Per-character XOR with the precomputed pad.
  std::vector<double> per_char;
  {
    auto msg = alice.messenger().begin_outgoing("bob");
    tg::stream::KeystreamPad pad(msg.keys);
    tg::stream::ComposeBuffer buf;
    for (int i = 0; i < samples; ++i)
      per_char.push_back(time_us([&] { tg::stream::encrypt_append(buf, pad, static_cast<std::uint8_t>('a' + i % 26)); }));
  }

  auto one_shot = [&](std::size_t n) {
    std::vector<double> v;
    const std::string text(n, 'x');
    for (int i = 0; i < std::max(1, samples / 10); ++i)
      v.push_back(time_us([&] { alice.messenger().encrypt_message("bob", text); }));
    return stats(v);
  };
  auto decrypt = [&](std::size_t n) {
    std::vector<double> v;
    const std::string text(n, 'y');
    for (int i = 0; i < std::max(1, samples / 10); ++i) {
      auto token = bob.messenger().encrypt_message("alice", text);
      v.push_back(time_us([&] { alice.messenger().open(token); }));
    }
    return stats(v);
  };

  struct Row {
    std::string name;
    Stats s;
    std::string reference;
  };
  std::vector<Row> rows = {
      {"watch() per keystroke", stats(watch), "139 us"},
      {"stream encrypt per char", stats(per_char), "107 us"},
      {"one-shot encrypt 200 chars", one_shot(200), "137 ms"},
      {"one-shot encrypt 1000 chars", one_shot(1000), "140 ms"},
      {"decrypt 50 chars", decrypt(50), "707 ms"},
      {"decrypt 1000 chars", decrypt(1000), "735 ms"},
  };
  json arr = json::array();
  std::ostringstream human;
  human << "operation                      median_us      p95_us     mean_us   reference (mean)\n";
  for (const auto& r : rows) {
    arr.push_back({{"operation", r.name}, {"median_us", r.s.median_us}, {"p95_us", r.s.p95_us},
                   {"mean_us", r.s.mean_us}, {"reference_mean", r.reference}});
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %11.2f %11.2f %11.2f   %s\n", r.name.c_str(), r.s.median_us, r.s.p95_us,
                  r.s.mean_us, r.reference.c_str());
    human << line;
  }
  human << "one-shot and decrypt include the ratchet step and store writes. Reference figures were\n"
           "measured on the original prototype's hardware and are shown for orientation only.";
  print(arr, human.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textguard: keyboard-level end-to-end encryption"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--store", g.store_flag, "Store directory (default ~/.textguard)");
  app.add_option("--config", g.config_flag, "Config file (key = value)");
  app.add_option("--directory", g.directory_flag, "Key directory: a file path or http://host:port");
  app.add_flag("--json", g.json_output, "Machine-readable output");

  std::string user;
  std::size_t prekeys = tg::store::kDefaultOneTimePrekeys;
  bool publish = false;
  auto* init = app.add_subcommand("init", "Create a store");
  init->add_option("--user", user, "Your user id")->required();
  init->add_option("--prekeys", prekeys, "One-time prekeys to generate");
  init->add_flag("--publish", publish, "Publish the bundle right away");

  auto* daemon = app.add_subcommand("daemon", "Run the interceptor daemon");
  daemon->require_subcommand(1);
  auto* daemon_run = daemon->add_subcommand("run", "Run in the foreground");
  bool daemon_init = false;
  std::string device, headless_recipient;
  daemon_run->add_flag("--init", daemon_init, "Create the store first if missing");
  daemon_run->add_option("--user", user, "User id for --init");
  daemon_run->add_option("--device", device, "Keyboard event device");
  daemon_run->add_option("--headless-recipient", headless_recipient,
                         "No GUI: encrypt every session to this contact (testing)");

  auto* contact = app.add_subcommand("contact", "Manage contacts");
  contact->require_subcommand(1);
  std::string contact_id;
  auto* contact_add = contact->add_subcommand("add", "Fetch and pin a contact's key");
  contact_add->add_option("id", contact_id)->required();
  auto* contact_list = contact->add_subcommand("list", "List contacts");
  auto* contact_verify = contact->add_subcommand("verify", "Mark verified, adopting a changed key");
  contact_verify->add_option("id", contact_id)->required();

  auto* keys = app.add_subcommand("keys", "Prekey bundles");
  keys->require_subcommand(1);
  auto* keys_publish = keys->add_subcommand("publish", "Register this store's bundle");
  auto* keys_fetch = keys->add_subcommand("fetch", "Show a user's bundle (consumes a one-time prekey)");
  keys_fetch->add_option("id", contact_id)->required();

  std::string to;
  bool v2 = false;
  auto* encrypt = app.add_subcommand("encrypt", "Encrypt stdin to a token");
  encrypt->add_option("--to", to, "Recipient")->required();
  encrypt->add_flag("--v2", v2, "Whole-message encryption instead of the streamed path");

  std::string from;
  auto* decrypt = app.add_subcommand("decrypt", "Decrypt every token in stdin");
  decrypt->add_option("--from", from, "Sender, when known");

  std::string scenario, report_out;
  bool negative = false;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario (.json) or key script (.jsonl)");
  simulate->add_option("file", scenario)->required();
  simulate->add_option("--out", report_out, "Write the report here");
  simulate->add_flag("--negative-control", negative, "Disable the cipher to prove the checks bite");

  int samples = 1000;
  auto* bench = app.add_subcommand("bench", "Latency table");
  bench->add_option("--samples", samples, "Samples per row")->check(CLI::PositiveNumber);

  auto* directory = app.add_subcommand("directory", "Key directory");
  directory->require_subcommand(1);
  auto* serve = directory->add_subcommand("serve", "Serve the directory over HTTP");
  std::string host = "127.0.0.1", persist;
  int port = 8787;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--persist", persist, "JSON file kept across restarts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    g.resolve();
    if (!user.empty() && daemon_run->parsed()) g.settings["user"] = user;
    if (init->parsed()) return cmd_init(user, prekeys, publish);
    if (daemon_run->parsed()) return cmd_daemon_run(daemon_init, device, headless_recipient);
    if (contact_add->parsed()) return cmd_contact_add(contact_id);
    if (contact_list->parsed()) return cmd_contact_list();
    if (contact_verify->parsed()) return cmd_contact_verify(contact_id);
    if (keys_publish->parsed()) return cmd_keys_publish();
    if (keys_fetch->parsed()) return cmd_keys_fetch(contact_id);
    if (encrypt->parsed()) return cmd_encrypt(to, v2);
    if (decrypt->parsed()) return cmd_decrypt(from.empty() ? std::nullopt : std::optional<std::string>(from));
    if (simulate->parsed()) return cmd_simulate(scenario, negative, report_out);
    if (bench->parsed()) return cmd_bench(samples);
    if (serve->parsed()) return cmd_directory_serve(host, port, persist);
  } catch (const tg::Error& e) {
    if (g.json_output)
      std::cerr << json{{"error", tg::to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
    else
      std::cerr << "textguard: " << e.what() << " (" << tg::to_string(e.code()) << ")\n";
    return tg::exit_code(e.code());
  }
  return 2;
}
