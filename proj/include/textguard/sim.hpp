#pragma once

// Deterministic end-to-end simulation: every participant gets a store, an
// interceptor with simulated keyboard/app/selection, and a headless GUI, all
// on one virtual clock and one in-process directory.
//
// Scenario document (JSON):
//   {
//     "name": "v1_basic", "seed": 7,
//     "participants": [{"id": "alice"}, {"id": "bob", "cache": false}],
//     "relay": {"mode": "faithful"} | {"mode": "tamper", "message": 0, "bit": 200}
//              | {"mode": "replay", "message": 0},
//     "steps": [ {"at": "alice", "action": "...", ...}, ... ]
//   }
//
// Actions (all but "wait" take "at"):
//   contact_add {contact}             fetch a bundle and pin it
//   shortcut    {chord}               press and release a chord
//   gui_pick    {contact, mode?, add?}
//   type        {text, gap_ms?}       typed key by key (default gap 80 ms)
//   keys        {chords: [...], gap_ms?}
//   wait        {ms}
//   submit      {text}                v2 compose window submit
//   cancel      {}                    close the GUI window mid-session
//   dev_api     {request}             one request line (object or raw string)
//   send        {to}                  press the app's send button; the relay
//                                     carries the textbox to `to`
//   decrypt     {message?, sender?, expect?, text?}
//                                     select inbox entry `message` (default:
//                                     latest) and press Ctrl+Alt+U
//   select_own_and_decrypt {message, expect?, text?}
//                                     the sender re-reads a message it sent
//   encrypt     {to, text, mode?}     shortcut, pick, type, pause, finish, send
//
// "$MARKERn" in any text becomes a seeded 32-character alphanumeric marker.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "textguard/directory.hpp"
#include "textguard/gui.hpp"
#include "textguard/interceptor.hpp"
#include "textguard/io.hpp"
#include "textguard/keystore.hpp"
#include "textguard/messenger.hpp"

namespace textguard::sim {

struct DeskOptions {
  InterceptorOptions interceptor;
  MessengerOptions messenger;
  std::size_t one_time_prekeys = 20;
};

/// A keyboard event that reached the application untouched.
struct RawDelivery {
  std::int64_t t_us = 0;
  std::string what;
  bool printable = false;
  Mode mode = Mode::Idle;
  bool capture_held = false;
};

class Desk {
 public:
  Desk(std::string id, const std::filesystem::path& root, directory::DirectoryClient* directory,
       std::uint64_t seed, io::VirtualClock& clock, DeskOptions options = {});
  Desk(const Desk&) = delete;
  Desk& operator=(const Desk&) = delete;

  const std::string& id() const { return id_; }
  store::Store& store() { return store_; }
  Messenger& messenger() { return messenger_; }
  Interceptor& interceptor() { return interceptor_; }
  io::AppTranscript& app() { return app_; }
  gui::HeadlessGui& gui() { return gui_; }
  io::SimSelection& selection() { return selection_; }
  io::SimCapture& capture() { return capture_; }
  const io::SimSink& sink() const { return sink_; }
  const std::vector<RawDelivery>& raw_log() const { return raw_log_; }
  /// Debounce flushes after which the textbox was not exactly the token.
  const std::vector<std::string>& flush_breaches() const { return flush_breaches_; }

  /// One keyboard event at the current clock time.
  void key(const io::KeyEvent& ev);
  /// Feeds frames the GUI has queued back into the interceptor.
  void pump();
  /// Runs the interceptor's timer if it is due.
  void fire_timer();

 private:
  std::string id_;
  io::VirtualClock& clock_;
  crypto::SeededEntropy entropy_;
  store::Store store_;
  Messenger messenger_;
  io::AppTranscript app_;
  io::SimCapture capture_;
  io::SimSink sink_;
  io::SimSelection selection_;
  gui::HeadlessGui gui_;
  Interceptor interceptor_;
  std::vector<RawDelivery> raw_log_;
  std::vector<std::string> flush_breaches_;
};

class World {
 public:
  explicit World(std::uint64_t seed);
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Creates the participant and publishes its bundle.
  Desk& add(const std::string& id, DeskOptions options = {});
  Desk& desk(const std::string& id);
  const std::vector<std::unique_ptr<Desk>>& desks() const { return desks_; }
  io::VirtualClock& clock() { return clock_; }
  directory::DirectoryService& directory() { return service_; }

  /// Moves the clock forward, firing due timers in time order.
  void advance_to(std::int64_t t);
  void wait_us(std::int64_t us) { advance_to(clock_.now() + us); }
  /// Press and release; the release lands 10 ms later.
  void press(Desk& desk, const std::string& chord);
  void type(Desk& desk, std::string_view text, std::int64_t gap_us = 80'000);
  /// Events with timestamps relative to now.
  void play(Desk& desk, const std::vector<io::KeyEvent>& events);

 private:
  std::uint64_t seed_;
  std::filesystem::path root_;
  io::VirtualClock clock_;
  directory::DirectoryService service_;
  directory::InProcessDirectory client_{service_};
  std::vector<std::unique_ptr<Desk>> desks_;
};

struct RunOptions {
  bool negative_control = false;
};

/// Throws SpecError for a malformed scenario.
nlohmann::json run_scenario(const nlohmann::json& scenario, const RunOptions& options = {});

/// A key script (JSONL) typed by "alice" into an encrypt session for "bob"
/// picked automatically, followed by a send and Bob's decrypt.
nlohmann::json run_key_script(const std::vector<io::KeyEvent>& events, std::uint64_t seed = 1,
                              const RunOptions& options = {});

/// Seeded 32-character alphanumeric markers.
std::vector<std::string> make_markers(std::uint64_t seed, std::size_t count);

}  // namespace textguard::sim
