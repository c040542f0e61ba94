#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <unistd.h>

#include "xfermon/config.hpp"
#include "xfermon/error.hpp"

using namespace xfermon;

namespace {

Config::Getenv env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
    if (auto it = vars.find(k); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

std::string write_temp(const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / ("xfermon-cfg-" + std::to_string(::getpid()) + ".json");
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST(Config, DefaultsMatchStructs) {
  const Config c;
  EXPECT_EQ(c.agent().interval, std::chrono::milliseconds(1000));
  EXPECT_EQ(c.agent().profile, Profile::Minimal14);
  EXPECT_EQ(c.rules().to_json(), RuleConfig{}.to_json());
  EXPECT_EQ(c.sim().congestion_rtt_factor, SimOptions{}.congestion_rtt_factor);
  EXPECT_EQ(c.collector().listen, "127.0.0.1:7400");
  EXPECT_EQ(c.hash(), Config().hash());
}

TEST(Config, FileThenEnvironment) {
  const auto path = write_temp(R"({"agent": {"interval_ms": 500, "profile": "Full142"}, "rules": {"kappa_gap": 0.75}})");
  const auto c = Config::load(path, env_of({{"XFERMON_AGENT_INTERVAL_MS", "250"}, {"XFERMON_SIM_NOISE", "false"}}));
  EXPECT_EQ(c.agent().interval, std::chrono::milliseconds(250));
  EXPECT_EQ(c.agent().profile, Profile::Full142);
  EXPECT_DOUBLE_EQ(c.rules().kappa_gap, 0.75);
  EXPECT_FALSE(c.sim().noise);
  EXPECT_NE(c.hash(), Config().hash());
  std::filesystem::remove(path);
}

TEST(Config, RejectsUnknownAndMistyped) {
  Config c;
  EXPECT_THROW(c.merge(nlohmann::json::parse(R"({"nope": {}})")), DataError);
  EXPECT_THROW(c.merge(nlohmann::json::parse(R"({"agent": {"bogus": 1}})")), DataError);
  EXPECT_THROW(c.merge(nlohmann::json::parse(R"({"agent": {"interval_ms": "fast"}})")), DataError);
  EXPECT_THROW(c.merge(nlohmann::json::parse(R"([1, 2])")), DataError);
  EXPECT_THROW(Config::load("", env_of({{"XFERMON_AGENT_QUEUE_CAPACITY", "many"}})), DataError);
  EXPECT_THROW(Config::load("/nonexistent/xfermon.json", env_of({})), DataError);
  const auto bad = write_temp("{not json");
  EXPECT_THROW(Config::load(bad, env_of({})), DataError);
  std::filesystem::remove(bad);
}

TEST(Config, RangeChecks) {
  Config c;
  c.merge(nlohmann::json::parse(R"({"agent": {"interval_ms": 10}})"));
  EXPECT_THROW(c.agent(), DataError);
  Config d;
  d.merge(nlohmann::json::parse(R"({"agent": {"profile": "Medium"}})"));
  EXPECT_THROW(d.agent(), DataError);
  Config e;
  e.merge(nlohmann::json::parse(R"({"rules": {"kappa_low": -1.0}})"));
  EXPECT_THROW(e.rules(), DataError);
}
