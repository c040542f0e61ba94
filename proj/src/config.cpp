#include "xfermon/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "xfermon/dataset.hpp"
#include "xfermon/error.hpp"

namespace xfermon {
namespace {

using ojson = nlohmann::ordered_json;

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

bool same_kind(const ojson& def, const nlohmann::json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  return false;
}

ojson parse_env_value(const ojson& def, const std::string& name, const std::string& text) {
  if (def.is_boolean()) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
  } else if (def.is_number_integer()) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && p == text.data() + text.size()) return v;
  } else if (def.is_number()) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (!text.empty() && end == text.c_str() + text.size()) return v;
  } else {
    return text;
  }
  throw DataError("bad value for " + name + ": " + text);
}

}  // namespace

Config::Config() {
  const SimOptions s;
  doc_["sim"] = {
      {"noise", s.noise},
      {"congestion_rtt_factor", s.congestion_rtt_factor},
      {"capacity_efficiency_min", s.capacity_efficiency_min},
      {"rtt_noise", s.rtt_noise},
      {"background_retransmit_ratio", s.background_retransmit_ratio},
      {"congestion_retransmit_ratio", s.congestion_retransmit_ratio},
      {"retransmit_amplification", s.retransmit_amplification},
      {"jitter_loss_coefficient", s.jitter_loss_coefficient},
  };
  const AgentConfig a;
  doc_["agent"] = {
      {"interval_ms", static_cast<std::int64_t>(a.interval.count())},
      {"profile", std::string(to_string(a.profile))},
      {"collector", a.collector},
      {"queue_capacity", static_cast<std::int64_t>(a.queue_capacity)},
      {"stale_after", a.stale_after},
      {"host_fetch_us", static_cast<std::int64_t>(a.costs.host_fetch.count())},
      {"oss_fetch_us", static_cast<std::int64_t>(a.costs.oss_fetch.count())},
  };
  const CollectorServiceConfig c;
  doc_["collector"] = {
      {"data_dir", "xfermon-data"},
      {"listen", c.listen},
      {"query_listen", c.query_listen},
      {"segment_max_bytes", static_cast<std::int64_t>(c.store.segment_max_bytes)},
      {"dedup_window_s", c.store.dedup_window_s},
      {"max_persist_per_s", c.store.max_persist_per_s},
      {"batch_max", static_cast<std::int64_t>(c.store.batch_max)},
  };
  doc_["rules"] = RuleConfig{}.to_json();
}

Config Config::load(const std::string& path) {
  return load(path, [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  });
}

Config Config::load(const std::string& path, const Getenv& getenv) {
  Config cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config " + path + ": " + e.what());
    }
    cfg.merge(j);
  }
  cfg.apply_env(getenv);
  return cfg;
}

void Config::merge(const nlohmann::json& overlay) {
  if (!overlay.is_object()) throw DataError("config must be a JSON object");
  for (const auto& [section, body] : overlay.items()) {
    if (!doc_.contains(section)) throw DataError("unknown config section " + section);
    if (!body.is_object()) throw DataError("config section " + section + " must be an object");
    auto& dst = doc_[section];
    for (const auto& [k, v] : body.items()) {
      if (!dst.contains(k)) throw DataError("unknown config key " + section + "." + k);
      if (!same_kind(dst[k], v)) throw DataError("wrong type for config key " + section + "." + k);
      dst[k] = v;
    }
  }
}

void Config::apply_env(const Getenv& getenv) {
  for (auto& [section, body] : doc_.items()) {
    for (auto& [k, v] : body.items()) {
      const auto name = "XFERMON_" + upper(section) + "_" + upper(k);
      if (auto text = getenv(name)) v = parse_env_value(v, name, *text);
    }
  }
}

std::string Config::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc_.dump())));
  return buf;
}

SimOptions Config::sim() const {
  const auto& j = doc_["sim"];
  SimOptions s;
  s.noise = j["noise"].get<bool>();
  s.congestion_rtt_factor = j["congestion_rtt_factor"].get<double>();
  s.capacity_efficiency_min = j["capacity_efficiency_min"].get<double>();
  s.rtt_noise = j["rtt_noise"].get<double>();
  s.background_retransmit_ratio = j["background_retransmit_ratio"].get<double>();
  s.congestion_retransmit_ratio = j["congestion_retransmit_ratio"].get<double>();
  s.retransmit_amplification = j["retransmit_amplification"].get<double>();
  s.jitter_loss_coefficient = j["jitter_loss_coefficient"].get<double>();
  if (s.congestion_rtt_factor < 1 || s.capacity_efficiency_min <= 0 || s.capacity_efficiency_min > 1 ||
      s.rtt_noise < 0 || s.background_retransmit_ratio < 0 || s.congestion_retransmit_ratio < 0 ||
      s.retransmit_amplification < 1 || s.jitter_loss_coefficient < 0)
    throw DataError("sim config out of range");
  return s;
}

AgentConfig Config::agent() const {
  const auto& j = doc_["agent"];
  AgentConfig a;
  const auto ms = j["interval_ms"].get<std::int64_t>();
  if (ms < 100) throw DataError("agent.interval_ms must be at least 100");
  a.interval = std::chrono::milliseconds(ms);
  const auto profile = parse_profile(j["profile"].get<std::string>());
  if (!profile) throw DataError("agent.profile must be Minimal14 or Full142");
  a.profile = *profile;
  a.collector = j["collector"].get<std::string>();
  const auto cap = j["queue_capacity"].get<std::int64_t>();
  if (cap < 1) throw DataError("agent.queue_capacity must be positive");
  a.queue_capacity = static_cast<std::size_t>(cap);
  a.stale_after = j["stale_after"].get<double>();
  if (a.stale_after <= 0) throw DataError("agent.stale_after must be positive");
  const auto h = j["host_fetch_us"].get<std::int64_t>();
  const auto o = j["oss_fetch_us"].get<std::int64_t>();
  if (h < 0 || o < 0) throw DataError("fetch costs must be non-negative");
  a.costs.host_fetch = std::chrono::microseconds(h);
  a.costs.oss_fetch = std::chrono::microseconds(o);
  return a;
}

CollectorServiceConfig Config::collector() const {
  const auto& j = doc_["collector"];
  CollectorServiceConfig c;
  c.store.data_dir = j["data_dir"].get<std::string>();
  c.listen = j["listen"].get<std::string>();
  c.query_listen = j["query_listen"].get<std::string>();
  const auto seg = j["segment_max_bytes"].get<std::int64_t>();
  const auto batch = j["batch_max"].get<std::int64_t>();
  c.store.dedup_window_s = j["dedup_window_s"].get<std::int64_t>();
  c.store.max_persist_per_s = j["max_persist_per_s"].get<double>();
  if (seg < 4096 || batch < 1 || c.store.dedup_window_s < 1 || c.store.max_persist_per_s < 0)
    throw DataError("collector config out of range");
  c.store.segment_max_bytes = static_cast<std::size_t>(seg);
  c.store.batch_max = static_cast<std::size_t>(batch);
  return c;
}

RuleConfig Config::rules() const {
  try {
    return RuleConfig::from_json(doc_["rules"]);
  } catch (const DomainError& e) {
    throw DataError(e.what());
  }
}

}  // namespace xfermon
