#pragma once

// Fluid-flow, one-second-resolution simulator of two Lustre-style clusters
// joined by a WAN. Every second the simulator allocates bandwidth to
// transfers and competitor loads with max-min fairness over the shared
// resources (OSTs, LNet NICs, WAN NICs, the WAN link), applies the TCP
// loss and window limits, and emits raw per-host and per-OSS counters.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xfermon/metrics.hpp"

namespace xfermon {

struct TestbedSpec {
  std::string id;
  double wan_bandwidth_bytes_per_s = 0;
  double rtt_us = 0;
  double per_ost_disk_read_bytes_per_s = 0;
  double per_ost_disk_write_bytes_per_s = 0;
  double lnet_nic_bytes_per_s = 0;
  int oss_count_per_side = 3;
  int client_count_per_side = 1;
  double default_tcp_buf_max_bytes = 0;
  double mss_bytes = 8948;
  int parallel_streams = 1;

  double bdp_bytes() const;
  // Throws DomainError if any invariant does not hold.
  void validate() const;
};

// Eight built-in testbeds spanning HDD/SSD disks, 10-100 Gbps WANs and
// 1.5-60 ms round-trip times.
const std::vector<TestbedSpec>& builtin_testbeds();
const TestbedSpec& builtin_testbed(std::string_view id);  // throws NotFound

struct AnomalySpec {
  AnomalyClass cls = AnomalyClass::Normal;
  // Class-specific: probability (loss, corrupt, reorder, duplicate), competitor
  // count (I/O and network congestion), bytes (buffer classes), or microseconds
  // of RTT standard deviation (jitter).
  double severity = 0;
  std::int64_t start_s = 0;
  std::int64_t end_s = std::numeric_limits<std::int64_t>::max();
  int target = 0;  // OST index for OST classes, DTN index for host classes
};

inline constexpr std::array<double, 4> kLossMenu = {0.0005, 0.001, 0.005, 0.01};
inline constexpr std::array<double, 4> kReorderMenu = {0.15, 0.25, 0.35, 0.45};
inline constexpr std::array<double, 4> kJitterMenuUs = {1000, 2000, 5000, 10000};
inline constexpr std::array<double, 19> kCompetitorGrid = {1,  2,  3,  4,  5,  6,  8,  10, 12, 16,
                                                           20, 24, 32, 40, 48, 64, 80, 96, 128};
// Misconfigured buffer as a fraction of the buffer needed for normal throughput.
inline constexpr std::array<double, 4> kBufferFractionMenu = {0.25, 0.4, 0.55, 0.7};

// Severity values a run of the class may use on the testbed, in increasing
// severity order (for buffers: decreasing buffer size).
std::vector<double> severity_menu(AnomalyClass cls, const TestbedSpec& tb);

// Throws DomainError when the severity is outside the class menu or the
// interval is empty.
void validate(const AnomalySpec& spec, const TestbedSpec& tb);

struct TransferJob {
  std::string transfer_id;
  std::int64_t file_count = 1;
  double file_size_bytes = 1;
  int source_ost_index = 0;
  int dest_ost_index = 0;
  std::int64_t start_s = 0;
  int dtn_index = 0;
};

enum class LoadKind : std::uint8_t { OstRead, OstWrite, DtnRead, DtnWrite, Wan };

// Greedy competitor processes or flows sharing one resource with transfers.
struct BackgroundLoad {
  LoadKind kind = LoadKind::OstRead;
  int target = 0;
  int count = 1;
  std::int64_t start_s = 0;
  std::int64_t end_s = std::numeric_limits<std::int64_t>::max();
};

struct SimOptions {
  bool noise = true;
  double congestion_rtt_factor = 1.8;
  double capacity_efficiency_min = 0.94;  // per-second efficiency drawn from [min, 1]
  double rtt_noise = 0.02;
  double background_retransmit_ratio = 2e-5;
  double congestion_retransmit_ratio = 1e-4;
  double retransmit_amplification = 1.25;  // retransmissions per lost packet
  double jitter_loss_coefficient = 0.01;   // equivalent loss when jitter stddev equals the rtt
};

struct SimRun {
  TestbedSpec testbed;
  std::vector<TransferJob> jobs;
  std::vector<AnomalySpec> anomalies;
  std::vector<BackgroundLoad> competitors;
  std::uint64_t seed = 0;
  std::int64_t duration_s = 60;
  SimOptions options;
};

using CounterSet = std::map<std::string, double, std::less<>>;

struct TransferCounters {
  std::string transfer_id;
  int ost_index = 0;
  std::string peer_host;
  CounterSet values;
};

struct HostSnapshot {
  std::string host_id;
  std::string testbed_id;
  Side side = Side::Sender;
  std::int64_t t = 0;
  CounterSet counters;
  std::map<std::string, TransferCounters, std::less<>> transfers;
};

struct OstCounters {
  double read_bytes_per_s = 0;
  double write_bytes_per_s = 0;
  double read_iops = 0;
  double write_iops = 0;
};

// One OSS serves one OST; ost_index is the OST's position on its side.
struct OssSnapshot {
  std::string oss_id;
  Side side = Side::Sender;
  int ost_index = 0;
  std::int64_t t = 0;
  OstCounters ost;
};

using MinimalValues = std::array<double, kMinimalCount>;

// Minimal metric values computed straight from the simulator's flow state,
// bypassing snapshots. Used to build datasets.
struct TransferTruth {
  std::string transfer_id;
  MinimalValues metrics{};
};

struct StepOutput {
  std::int64_t t = 0;
  std::vector<HostSnapshot> hosts;
  std::vector<OssSnapshot> oss;
  std::vector<TransferTruth> transfers;
  // Capacities in force this second, for invariant checks.
  std::map<std::string, double, std::less<>> capacities;
};

std::string host_id(const TestbedSpec& tb, Side side, int dtn);
std::string oss_id(const TestbedSpec& tb, Side side, int ost);

class Simulator {
 public:
  // Validates the run and injects its anomalies.
  explicit Simulator(SimRun run);

  // Adds an anomaly; throws DomainError for an invalid spec or when it overlaps
  // an anomaly of the same class on the same resource.
  void inject(const AnomalySpec& spec);

  // Advances one second and returns the counters for second `now()`.
  StepOutput step();

  std::int64_t now() const { return t_; }
  bool finished() const { return t_ >= run_.duration_s; }
  const SimRun& run() const { return run_; }
  double bytes_done(std::string_view transfer_id) const;

 private:
  struct JobState {
    TransferJob job;
    double remaining = 0;
    double done = 0;
  };

  SimRun run_;
  std::vector<JobState> jobs_;
  std::int64_t t_ = 0;
  std::mt19937_64 capacity_rng_;
  std::mt19937_64 counter_rng_;
};

// Runs the whole simulation, calling `sink` with every step.
void run_simulation(const SimRun& run, const std::function<void(const StepOutput&)>& sink);

// Noise-free single-transfer steady-state throughput with and without the anomaly.
double steady_throughput(const TestbedSpec& tb, std::optional<AnomalySpec> anomaly, const SimOptions& opts = {});

}  // namespace xfermon
