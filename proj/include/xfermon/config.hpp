#pragma once

// Layered configuration. Built-in defaults are overlaid by an optional JSON
// file and then by XFERMON_<SECTION>_<KEY> environment variables, e.g.
// XFERMON_AGENT_INTERVAL_MS=500. Unknown sections or keys are rejected.
//
// {
//   "sim":       {"noise": true, "congestion_rtt_factor": 1.8, ...},
//   "agent":     {"interval_ms": 1000, "profile": "Minimal14", "collector": "127.0.0.1:7400", ...},
//   "collector": {"data_dir": "xfermon-data", "listen": "127.0.0.1:7400", ...},
//   "rules":     {"kappa_buf": 0.9, ..., "window_s": 10}
// }

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "xfermon/agent.hpp"
#include "xfermon/collector.hpp"
#include "xfermon/diagnose.hpp"
#include "xfermon/sim.hpp"

namespace xfermon {

struct AgentConfig {
  std::chrono::milliseconds interval{1000};
  Profile profile = Profile::Minimal14;
  std::string collector = "127.0.0.1:7400";
  std::size_t queue_capacity = 10000;
  double stale_after = 2.0;  // in intervals
  UpstreamCosts costs;
};

struct CollectorServiceConfig {
  CollectorConfig store;
  std::string listen = "127.0.0.1:7400";
  std::string query_listen = "127.0.0.1:7401";
};

class Config {
 public:
  using Getenv = std::function<std::optional<std::string>(const std::string&)>;

  Config();
  // Defaults overlaid with the file at `path` (if not empty) and the
  // process environment. Throws DataError for unreadable or invalid input.
  static Config load(const std::string& path);
  static Config load(const std::string& path, const Getenv& getenv);

  void merge(const nlohmann::json& overlay);  // throws DataError
  void apply_env(const Getenv& getenv);       // throws DataError

  const nlohmann::ordered_json& json() const { return doc_; }
  std::string hash() const;  // hex fnv1a of the canonical dump

  SimOptions sim() const;
  AgentConfig agent() const;
  CollectorServiceConfig collector() const;
  RuleConfig rules() const;

 private:
  nlohmann::ordered_json doc_;
};

}  // namespace xfermon
