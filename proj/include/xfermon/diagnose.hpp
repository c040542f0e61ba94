#pragma once

// Root-cause classification of low transfer throughput: baseline fitting,
// the ordered rule engine, normal-class normalization, a nearest-centroid
// classifier for cross-testbed comparisons, and scoring.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfermon/dataset.hpp"
#include "xfermon/metrics.hpp"

namespace xfermon {

struct BaselineProfile {
  std::string testbed_id;
  MinimalValues mean{};
  MinimalValues stddev{};
  double normal_rtt_us = 0;
  double normal_throughput = 0;
  double disk_read_max = 0;   // max per-second sender OST read over normal rows
  double disk_write_max = 0;  // max per-second receiver OST write over normal rows
  double bdp_bytes = 0;
  std::size_t rows = 0;

  // The same profile expressed in normalized units: rate means become 1,
  // buffers are in BDPs, RTT in multiples of the normal RTT.
  BaselineProfile normalized() const;

  nlohmann::ordered_json to_json() const;
  static BaselineProfile from_json(const nlohmann::json& j);  // throws DataError
};

// Throws DataError when `rows` is empty or bdp is not positive.
BaselineProfile fit_baseline(std::span<const DatasetRow> rows, double bdp_bytes);
BaselineProfile fit_baseline(std::span<const DatasetRow> rows, const TestbedSpec& tb);

struct RuleConfig {
  double kappa_buf = 0.9;
  double kappa_near = 0.85;
  double kappa_gap = 0.8;
  double kappa_low = 0.7;
  double kappa_high = 1.2;
  double loss_ratio = 0.0005;
  double rtt_factor = 1.5;
  std::int64_t window_s = 10;

  void validate() const;  // throws DomainError
  nlohmann::ordered_json to_json() const;
  static RuleConfig from_json(const nlohmann::json& j);  // missing keys keep defaults
};

struct Evidence {
  std::string operand;
  double observed = 0;
  double threshold = 0;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct Diagnosis {
  std::string transfer_id;
  std::int64_t t0 = 0;
  std::int64_t t1 = 0;
  AnomalyClass label = AnomalyClass::Normal;
  std::string fired_rule;
  std::vector<Evidence> evidence;

  friend bool operator==(const Diagnosis&, const Diagnosis&) = default;
  nlohmann::ordered_json to_json() const;
};

// Window means; retransmissions and sent packets are summed so their ratio is
// the window's retransmit ratio. NaN marks a missing value and propagates.
MinimalValues aggregate_window(std::span<const MinimalValues> rows);

double retransmit_ratio(const MinimalValues& v);

// Evaluates R1..R8 in order on the aggregated window and returns the first
// match, or Normal with fired_rule "normal-fallback". Throws DomainError when
// the window is shorter than config.window_s and DataError naming the key when
// an operand is missing.
Diagnosis classify(std::span<const MinimalValues> window, const BaselineProfile& baseline, const RuleConfig& config,
                   std::string transfer_id = {}, std::int64_t t0 = 0);

// Rule evaluation on an already-aggregated window.
Diagnosis classify_aggregate(const MinimalValues& agg, const BaselineProfile& baseline, const RuleConfig& config);

// Rates divided by their baseline mean, buffers by the BDP, retransmissions
// replaced by the retransmit ratio (sent becomes 1) and RTT by its ratio to the
// normal RTT. Throws DataError for a zero baseline mean of a rate metric.
MinimalValues normalize(const MinimalValues& v, const BaselineProfile& baseline);
std::vector<DatasetRow> normalize(std::span<const DatasetRow> rows, const BaselineProfile& baseline);

// Tumbling windows of `window_s` seconds per transfer; a trailing partial
// window is dropped. Rows must not mix testbeds within a transfer.
struct WindowSample {
  std::string testbed_id;
  std::string transfer_id;
  std::int64_t t0 = 0;
  std::int64_t t1 = 0;
  AnomalyClass label = AnomalyClass::Normal;
  std::vector<MinimalValues> rows;
  MinimalValues mean{};
};

std::vector<WindowSample> make_windows(std::span<const DatasetRow> rows, std::int64_t window_s);

std::vector<Diagnosis> diagnose_rows(std::span<const DatasetRow> rows, const BaselineProfile& baseline,
                                     const RuleConfig& config);

struct LabeledVector {
  MinimalValues x{};
  AnomalyClass label = AnomalyClass::Normal;
};

struct CentroidModel {
  MinimalValues center{};  // standardization offsets
  MinimalValues scale{};   // standardization divisors (1 where the feature is constant)
  std::vector<AnomalyClass> classes;
  std::vector<MinimalValues> centroids;  // in standardized units
};

// Throws DomainError when the training set is empty or a required class has no rows.
CentroidModel centroid_fit(std::span<const LabeledVector> rows, std::span<const AnomalyClass> required = {});
AnomalyClass centroid_predict(const CentroidModel& model, const MinimalValues& x);

struct ClassScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct ScoreReport {
  std::array<ClassScore, kLabelCount> per_class{};
  std::array<bool, kLabelCount> present{};  // class occurs in labels or predictions
  double macro_f1 = 0;
  double accuracy = 0;
  std::array<std::array<std::size_t, kLabelCount>, kLabelCount> confusion{};  // [truth][predicted]
  std::size_t total = 0;

  nlohmann::ordered_json to_json() const;
  std::string table() const;
};

// Macro F1 averages over classes present in either sequence. Throws
// DomainError when lengths differ or a class is outside the label space.
ScoreReport score(std::span<const AnomalyClass> predictions, std::span<const AnomalyClass> labels);

}  // namespace xfermon
