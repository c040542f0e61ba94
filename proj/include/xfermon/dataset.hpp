#pragma once

// Labeled datasets of per-second minimal metrics, their NDJSON form, the
// severity sweeps behind the throughput-vs-severity curves, and run manifests.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfermon/metrics.hpp"
#include "xfermon/sim.hpp"

namespace xfermon {

struct DatasetRow {
  std::string testbed_id;
  std::string transfer_id;
  std::int64_t t = 0;
  AnomalyClass label = AnomalyClass::Normal;
  MinimalValues metrics{};

  friend bool operator==(const DatasetRow&, const DatasetRow&) = default;
};

// Predicted noise-free throughput drop a labeled run must show for its
// severity to be eligible. The band sits inside the 20-80% target with room
// for per-second noise.
inline constexpr double kMinPlannedDrop = 0.35;
inline constexpr double kMaxPlannedDrop = 0.75;

struct GenOptions {
  std::vector<AnomalyClass> classes;  // empty = all nine labels
  int runs_per_class = 10;
  std::uint64_t seed = 1;
  std::int64_t duration_s = 30;
  std::int64_t file_count = 100;
  double file_size_bytes = 3.0 * 1024 * 1024 * 1024;
  SimOptions sim;
};

struct RunPlan {
  std::string testbed_id;
  AnomalyClass label = AnomalyClass::Normal;
  int run = 0;
  double severity = 0;
  std::uint64_t seed = 0;
  std::string transfer_id;
};

// Menu severities whose predicted drop falls inside [kMinPlannedDrop, kMaxPlannedDrop].
std::vector<double> admissible_severities(AnomalyClass cls, const TestbedSpec& tb, const SimOptions& opts = {});

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

std::vector<RunPlan> plan_runs(const TestbedSpec& tb, const GenOptions& opts);
SimRun make_sim_run(const TestbedSpec& tb, const RunPlan& plan, const GenOptions& opts);
std::vector<DatasetRow> simulate_run(const TestbedSpec& tb, const RunPlan& plan, const GenOptions& opts);

std::vector<DatasetRow> generate_dataset(const std::vector<TestbedSpec>& testbeds, const GenOptions& opts);

// Normal runs from a seed family disjoint from generate_dataset's, used to fit baselines.
std::vector<DatasetRow> generate_normal_runs(const TestbedSpec& tb, int runs, const GenOptions& opts);

nlohmann::ordered_json to_json(const DatasetRow& row);
DatasetRow row_from_json(const nlohmann::json& j);  // throws DataError

// Header line followed by one row per line.
void write_dataset(std::ostream& out, const std::vector<DatasetRow>& rows, std::string_view source);
std::vector<DatasetRow> read_dataset(std::istream& in);  // throws DataError
void write_dataset_file(const std::string& path, const std::vector<DatasetRow>& rows, std::string_view source);
std::vector<DatasetRow> read_dataset_file(const std::string& path);

struct SweepPoint {
  std::string testbed_id;
  AnomalyClass cls = AnomalyClass::Normal;
  double severity = 0;
  double mean_throughput = 0;
  double normal_throughput = 0;
};

// Mean throughput for every menu severity of each class, with common random
// numbers across severities so that curves compare like with like.
std::vector<SweepPoint> severity_sweep(const TestbedSpec& tb, const std::vector<AnomalyClass>& classes,
                                       std::uint64_t seed, std::int64_t duration_s, const SimOptions& opts = {});

// CSV with columns curve,x,y.
void write_curves_csv(std::ostream& out, const std::vector<SweepPoint>& points);

std::uint64_t fnv1a(std::string_view data);

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::map<std::string, std::string> config_hashes;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);  // throws DataError
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

std::string utc_timestamp();

}  // namespace xfermon
