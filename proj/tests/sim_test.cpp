#include "textguard/sim.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "textguard/error.hpp"

namespace textguard::sim {
namespace {

using nlohmann::json;

const std::filesystem::path kScenarios = TEXTGUARD_SCENARIO_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render(const json& report) {
  return report.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

json load(const std::string& name) { return json::parse(slurp(kScenarios / (name + ".json"))); }

class Golden : public ::testing::TestWithParam<std::string> {};

TEST_P(Golden, PassesAndMatchesFrozenReport) {
  const auto report = run_scenario(load(GetParam()));
  EXPECT_TRUE(report["pass"].get<bool>()) << report["verdicts"].dump(2);
  const auto golden = slurp(kScenarios / "golden" / (GetParam() + ".report.json"));
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(render(report), golden);
}

TEST_P(Golden, NegativeControlLeaks) {
  RunOptions opts;
  opts.negative_control = true;
  const auto report = run_scenario(load(GetParam()), opts);
  const auto& c = report["verdicts"]["confidentiality"];
  EXPECT_FALSE(c["pass"].get<bool>());
  EXPECT_TRUE(c.contains("offset"));
  EXPECT_TRUE(c.contains("where"));
}

INSTANTIATE_TEST_SUITE_P(Scenarios, Golden, ::testing::Values("v1_basic", "v2_basic", "dev_api", "tamper", "replay"));

TEST(Scenario, KeyScriptMatchesFrozenReport) {
  std::ifstream in(kScenarios / "v1_basic.jsonl");
  const auto events = io::read_jsonl(in);
  const auto report = run_key_script(events);
  EXPECT_TRUE(report["pass"].get<bool>());
  EXPECT_EQ(render(report), slurp(kScenarios / "golden" / "v1_keys.report.json"));
  ASSERT_EQ(report["quiescence"].size(), 1u);
  EXPECT_TRUE(report["quiescence"][0]["one_token"].get<bool>());
}

TEST(Scenario, KeyScriptThatNeverEncryptsFails) {
  std::vector<io::KeyEvent> events;
  std::int64_t t = 0;
  for (char c : std::string("plain words only")) {
    if (c == ' ') c = 'x';
    auto ev = io::parse_chord(std::string(1, c));
    ev.timestamp_us = t;
    events.push_back(ev);
    ev.action = io::KeyAction::Up;
    ev.timestamp_us = t + 10'000;
    events.push_back(ev);
    t += 80'000;
  }
  EXPECT_FALSE(run_key_script(events)["pass"].get<bool>());
}

TEST(Scenario, SameSeedSameReport) {
  EXPECT_EQ(render(run_scenario(load("tamper"))), render(run_scenario(load("tamper"))));
}

TEST(Scenario, DifferentSeedDifferentTokens) {
  auto a = load("v1_basic");
  auto b = a;
  b["seed"] = 999;
  EXPECT_NE(run_scenario(a)["relay"].dump(), run_scenario(b)["relay"].dump());
}

TEST(Scenario, EmptyScenarioPassesVacuously) {
  const auto report = run_scenario({{"name", "empty"}, {"seed", 1}, {"participants", json::array()}, {"steps", json::array()}});
  EXPECT_TRUE(report["pass"].get<bool>());
  EXPECT_TRUE(report["verdicts"]["confidentiality"]["pass"].get<bool>());
}

TEST(Scenario, TamperNeverDisplaysWrongText) {
  const auto report = run_scenario(load("tamper"));
  const auto& first = report["decrypts"][0]["items"][0];
  EXPECT_EQ(first["status"], "integrity_warning");
  EXPECT_FALSE(first.contains("text"));
  EXPECT_TRUE(report["verdicts"]["expectations"]["pass"].get<bool>());
}

TEST(Scenario, ReplayAfterErasureIsUnrecoverable) {
  const auto report = run_scenario(load("replay"));
  bool unrecoverable = false;
  for (const auto& d : report["decrypts"])
    for (const auto& item : d["items"])
      if (item["status"] == "unrecoverable") unrecoverable = true;
  EXPECT_TRUE(unrecoverable);
}

Errc spec_error(const json& doc) {
  try {
    run_scenario(doc);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::CryptoFailure;
}

TEST(Scenario, MalformedScenariosAreRejected) {
  EXPECT_EQ(spec_error(json::array()), Errc::SpecError);
  EXPECT_EQ(spec_error({{"participants", {{{"id", "alice"}}}}, {"steps", {{{"action", "fly"}, {"at", "alice"}}}}}),
            Errc::SpecError);
  EXPECT_EQ(spec_error({{"participants", json::array()}, {"steps", {{{"action", "type"}, {"at", "nobody"}, {"text", "x"}}}}}),
            Errc::SpecError);
  EXPECT_EQ(spec_error({{"participants", {{{"id", "alice"}}}}, {"relay", {{"mode", "eavesdrop"}}}, {"steps", json::array()}}),
            Errc::SpecError);
  EXPECT_EQ(spec_error({{"participants", {{{"id", "alice"}}}}, {"steps", {{{"action", "wait"}}}}}), Errc::SpecError);
}

TEST(Markers, SeededAlphanumeric) {
  const auto a = make_markers(5, 3);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, make_markers(5, 3));
  EXPECT_NE(a, make_markers(6, 3));
  for (const auto& m : a) {
    EXPECT_EQ(m.size(), 32u);
    for (char c : m) EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)));
  }
}

}  // namespace
}  // namespace textguard::sim
