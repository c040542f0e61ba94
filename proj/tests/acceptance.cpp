// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "support/properties.hpp"
#include "xfermon/codec.hpp"
#include "xfermon/collector.hpp"
#include "xfermon/dataset.hpp"
#include "xfermon/evaluate.hpp"
#include "xfermon/pipeline.hpp"

using namespace xfermon;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kAc1MinF1 = 0.95;
constexpr double kAc1MaxSeconds = 120;
constexpr double kAc2MinGain = 0.15;
constexpr double kAc2MinNormalized = 0.75;
constexpr double kAc3SlopeTolerance = 0.05;
constexpr double kAc4FullMaxMs = 100;
constexpr double kAc4MinimalMaxMs = 20;
constexpr double kAc4MinSlowdown = 5;
constexpr std::size_t kAc5Envelopes = 10000;
constexpr double kAc6FullRate = 5000;
constexpr double kAc6MinimalRate = 10000;
constexpr double kAc6Headroom = 1.1;      // offered load relative to the target
constexpr double kAc6MaxQueueSeconds = 0.5;  // bounded queue: at most this much traffic waiting
constexpr double kAc7DuplicateTolerance = 0.10;
constexpr double kAc8MinDrop = 0.20;
constexpr double kAc8MaxDrop = 0.80;

using Wall = std::chrono::steady_clock;

double seconds_since(Wall::time_point t0) { return std::chrono::duration<double>(Wall::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* what, const Outcome& o) {
  std::printf("%s %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", what, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("xfermon-acceptance-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  return p;
}

// Shared between AC1, AC2 and AC8.
struct Corpus {
  std::vector<std::vector<DatasetRow>> rows;  // per testbed
  std::vector<TestbedEval> evals;
  double seconds = 0;
};

Corpus build_corpus() {
  Corpus c;
  const auto t0 = Wall::now();
  GenOptions go;  // 9 classes x 10 runs x 30 s
  for (const auto& tb : builtin_testbeds()) {
    auto rows = generate_dataset({tb}, go);
    const auto baseline = fit_baseline(generate_normal_runs(tb, 5, go), tb);
    c.evals.push_back(evaluate_rows(rows, baseline, RuleConfig{}));
    c.rows.push_back(std::move(rows));
  }
  c.seconds = seconds_since(t0);
  return c;
}

Outcome ac1(const Corpus& c) {
  double worst = 1;
  std::string worst_id, per;
  for (const auto& e : c.evals) {
    per += fmt(" %s=%.3f", e.testbed_id.c_str(), e.report.macro_f1);
    if (worst_id.empty() || e.report.macro_f1 < worst) {
      worst = e.report.macro_f1;
      worst_id = e.testbed_id;
    }
  }
  Outcome o;
  o.pass = worst >= kAc1MinF1 && c.seconds < kAc1MaxSeconds;
  o.detail = fmt("min macro-F1 %.3f (%s) >= %.2f, %.1f s < %.0f s;", worst, worst_id.c_str(), kAc1MinF1, c.seconds,
                 kAc1MaxSeconds) +
             per;
  return o;
}

Outcome ac2(const Corpus& c) {
  std::vector<std::vector<WindowSample>> raw, norm;
  std::vector<std::string> ids;
  for (const auto& e : c.evals) {
    raw.push_back(e.windows);
    norm.push_back(e.normalized_windows);
    ids.push_back(e.testbed_id);
  }
  const double r = transfer_matrix(raw, ids).off_diagonal_mean();
  const double n = transfer_matrix(norm, ids).off_diagonal_mean();
  Outcome o;
  o.pass = n - r >= kAc2MinGain && n >= kAc2MinNormalized;
  o.detail = fmt("56-pair mean F1 raw %.4f, normalized %.4f, gain %.4f >= %.2f, normalized >= %.2f", r, n, n - r,
                 kAc2MinGain, kAc2MinNormalized);
  return o;
}

Outcome ac3() {
  const auto dir = scratch("ac3");
  CollectorConfig cfg;
  cfg.data_dir = dir;
  Collector collector(cfg);
  RealtimeOptions opts;
  opts.testbed = builtin_testbed("tb2");
  opts.interval = 1000ms;
  opts.profile = Profile::Minimal14;
  opts.ramp = {{0, 100}, {3, 200}, {6, 300}, {9, 400}};
  opts.ticks = 12;
  opts.make_sink = [&] { return std::make_unique<CollectorSink>(collector); };
  const auto rep = run_realtime(opts);
  collector.flush();
  const auto persisted = collector.stats().persisted_total;
  collector.stop();
  fs::remove_all(dir);

  // Least squares of msgs/s against active transfers.
  const double interval_s = std::chrono::duration<double>(opts.interval).count();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  std::size_t drops = 0, gaps = 0, published = 0;
  std::map<std::size_t, double> by_level;
  for (const auto& t : rep.ticks) {
    const double x = static_cast<double>(t.active);
    const double y = static_cast<double>(t.published) / interval_s;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
    drops += t.dropped;
    gaps += t.gaps;
    published += t.published;
    by_level[t.active] = y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  drops += rep.publisher.dropped;
  std::string levels;
  for (const auto& [a, y] : by_level) levels += fmt(" %zu->%.0f", a, y);
  Outcome o;
  o.pass = std::abs(slope - 1.0) <= kAc3SlopeTolerance && drops == 0 && by_level.size() == 4 &&
           persisted == published;
  o.detail = fmt("slope %.4f (1 +/- %.2f), drops %zu, gaps %zu, persisted %llu of %zu;", slope, kAc3SlopeTolerance,
                 drops, gaps, static_cast<unsigned long long>(persisted), published) +
             levels;
  return o;
}

Outcome ac4() {
  const auto& tb = builtin_testbed("tb2");
  SimRun run;
  run.testbed = tb;
  run.seed = 4;
  run.duration_s = 60;
  for (int i = 0; i < 3; ++i)
    run.jobs.push_back({"lat" + std::to_string(i), 100, 3.0 * (1 << 30), i, (i + 2) % 3, 0, 0});
  Simulator sim(run);
  World world;
  world.publish(std::make_shared<const StepOutput>(sim.step()));
  Upstream up(world);  // default command and RPC costs
  SteadyClock clock;
  const auto interval = std::chrono::duration_cast<Clock::duration>(1s);
  HostCache hosts([&](const std::string& id) { return up.fetch_host(id); }, clock, host_ids(tb));
  OssCache oss([&](const std::string& id) { return up.fetch_oss(id); }, clock, oss_ids(tb));
  hosts.refresh_once();
  oss.refresh_once();
  hosts.start(Wall::now(), interval, 0ns);
  oss.start(Wall::now(), interval, 0ns);
  CachedSource cached(hosts, oss, clock, interval);
  DirectSource direct(up);

  // Worst single-envelope latency over `n` collections.
  auto measure = [&](SnapshotSource& src, Profile p, int n, double& mean_ms) {
    Agent agent(tb, 0, src, p);
    double worst = 0, total = 0;
    for (int k = 0; k < n; ++k) {
      const auto t0 = Wall::now();
      const auto env = agent.collect("lat" + std::to_string(k % 3), 0);
      const double ms = seconds_since(t0) * 1e3;
      if (env.gap) return -1.0;
      worst = std::max(worst, ms);
      total += ms;
    }
    mean_ms = total / n;
    return worst;
  };
  double full_mean = 0, min_mean = 0, direct_mean = 0;
  const double full = measure(cached, Profile::Full142, 300, full_mean);
  const double minimal = measure(cached, Profile::Minimal14, 300, min_mean);
  const double direct_worst = measure(direct, Profile::Full142, 10, direct_mean);
  hosts.stop();
  oss.stop();

  const double slowdown = direct_mean / full_mean;
  Outcome o;
  o.pass = full >= 0 && minimal >= 0 && direct_worst >= 0 && full <= kAc4FullMaxMs && minimal <= kAc4MinimalMaxMs &&
           slowdown >= kAc4MinSlowdown;
  o.detail = fmt("cached worst Full142 %.3f ms <= %.0f, Minimal14 %.3f ms <= %.0f; uncached Full142 mean %.1f ms = "
                 "%.0fx cached mean (>= %.0fx)",
                 full, kAc4FullMaxMs, minimal, kAc4MinimalMaxMs, direct_mean, slowdown, kAc4MinSlowdown);
  return o;
}

Outcome ac5() {
  const auto r = props::envelope_roundtrip(kAc5Envelopes, 5);
  std::mt19937_64 rng(55);
  std::size_t full_max = 0, min_max = 0;
  for (std::size_t i = 0; i < kAc5Envelopes; ++i) {
    full_max = std::max(full_max, encode(props::random_envelope(rng, Profile::Full142)).size());
    min_max = std::max(min_max, encode(props::random_envelope(rng, Profile::Minimal14)).size());
  }
  Outcome o;
  o.pass = r.ok && full_max <= kFullPayloadBudget && min_max <= kMinimalPayloadBudget;
  o.detail = fmt("%zu round trips %s; largest Full142 %zu B <= %zu, Minimal14 %zu B <= %zu", r.cases,
                 r.ok ? "ok" : r.detail.c_str(), full_max, kFullPayloadBudget, min_max, kMinimalPayloadBudget);
  return o;
}

struct IngestRun {
  double achieved = 0;          // persisted envelopes per second of offered load
  std::size_t max_depth = 0;    // writer queue
  std::vector<std::size_t> depth_samples;
  std::uint64_t persisted = 0;
  std::uint64_t offered = 0;
  std::uint64_t rejected = 0;
  std::uint64_t reopened = 0;   // records found by a fresh collector on the same store
};

// Nine agent connections offering `rate` envelopes/s in total for `seconds`.
IngestRun ingest(Profile profile, double rate, double seconds, double max_persist_per_s, bool drain_check) {
  constexpr int kConnections = 9;
  const auto dir = scratch(std::string("ac6-") + std::string(to_string(profile)));
  CollectorConfig cfg;
  cfg.data_dir = dir;
  cfg.max_persist_per_s = max_persist_per_s;
  IngestRun res;
  {
    Collector collector(cfg);
    IngestServer server(collector, Endpoint{"127.0.0.1", 0});
    const auto per_conn = static_cast<std::size_t>(rate * seconds / kConnections);
    res.offered = per_conn * kConnections;

    std::vector<std::vector<std::uint8_t>> streams(kConnections);
    std::vector<std::vector<std::size_t>> offsets(kConnections);
    std::mt19937_64 rng(66);
    for (int c = 0; c < kConnections; ++c) {
      for (std::size_t i = 0; i < per_conn; ++i) {
        auto env = props::random_envelope(rng, profile);
        env.transfer_id = "ac6-" + std::to_string(c) + "-" + std::to_string(i % 50);
        env.testbed_id = "ac6";
        env.timestamp = static_cast<std::int64_t>(i / 50);
        offsets[c].push_back(streams[c].size());
        append_frame(streams[c], encode(env));
      }
      offsets[c].push_back(streams[c].size());
    }

    const auto t0 = Wall::now() + 20ms;
    std::vector<std::thread> senders;
    for (int c = 0; c < kConnections; ++c)
      senders.emplace_back([&, c] {
        auto sock = connect_tcp(Endpoint{"127.0.0.1", server.port()});
        const double per_s = rate / kConnections;
        std::size_t sent = 0;
        for (int tick = 0; sent < per_conn; ++tick) {
          std::this_thread::sleep_until(t0 + tick * 5ms);
          const auto due = std::min(per_conn, static_cast<std::size_t>(per_s * (tick + 1) * 0.005));
          if (due <= sent) continue;
          sock.send_all(std::span<const std::uint8_t>(streams[c]).subspan(offsets[c][sent], offsets[c][due] - offsets[c][sent]));
          sent = due;
        }
      });

    std::this_thread::sleep_until(t0);
    const auto deadline = t0 + std::chrono::duration<double>(seconds * (max_persist_per_s > 0 ? 1 : 3) + 2);
    while (Wall::now() < deadline) {
      const auto s = collector.stats();
      res.depth_samples.push_back(s.queue_depth);
      res.max_depth = std::max(res.max_depth, s.queue_depth);
      if (s.persisted_total + s.reject_total >= res.offered) break;
      std::this_thread::sleep_for(10ms);
    }
    const double elapsed = std::chrono::duration<double>(Wall::now() - t0).count();
    for (auto& t : senders) t.join();
    if (drain_check) {
      // Let a throttled writer finish, then check nothing was lost.
      for (;;) {
        const auto s = collector.stats();
        if (s.persisted_total + s.reject_total >= res.offered) break;
        std::this_thread::sleep_for(20ms);
      }
    }
    collector.flush();
    const auto s = collector.stats();
    res.persisted = s.persisted_total;
    res.rejected = s.reject_total;
    res.achieved = static_cast<double>(std::min<std::uint64_t>(s.persisted_total, res.offered)) / std::max(elapsed, seconds);
    server.stop();
    collector.stop();
  }
  if (drain_check) {
    Collector reopened(cfg);
    res.reopened = reopened.stats().persisted_total;
    reopened.stop();
  }
  fs::remove_all(dir);
  return res;
}

Outcome ac6() {
  const double seconds = 3;
  const auto full = ingest(Profile::Full142, kAc6FullRate * kAc6Headroom, seconds, 0, false);
  const auto minimal = ingest(Profile::Minimal14, kAc6MinimalRate * kAc6Headroom, seconds, 0, false);
  const bool full_ok = full.achieved >= kAc6FullRate && full.persisted == full.offered &&
                       full.max_depth <= kAc6FullRate * kAc6Headroom * kAc6MaxQueueSeconds;
  const bool min_ok = minimal.achieved >= kAc6MinimalRate && minimal.persisted == minimal.offered &&
                      minimal.max_depth <= kAc6MinimalRate * kAc6Headroom * kAc6MaxQueueSeconds;

  // Overload: a writer capped well below the offered load.
  const double cap = 2000;
  const auto over = ingest(Profile::Minimal14, 6000, 2, cap, true);
  // Queue depth while frames are still arriving: non-decreasing up to sampling jitter.
  const std::size_t arriving = std::min<std::size_t>(over.depth_samples.size(), 2000 / 10);
  std::size_t dips = 0, peak = 0;
  for (std::size_t i = 0; i < arriving; ++i) {
    if (over.depth_samples[i] + 200 < peak) ++dips;
    peak = std::max(peak, over.depth_samples[i]);
  }
  const bool over_ok = dips == 0 && peak > over.offered / 3 && over.persisted == over.offered &&
                       over.reopened == over.offered && over.rejected == 0;

  Outcome o;
  o.pass = full_ok && min_ok && over_ok;
  o.detail = fmt("Full142 %.0f/s (>= %.0f, max queue %zu); Minimal14 %.0f/s (>= %.0f, max queue %zu); overload at "
                 "3x a %.0f/s writer: queue peak %zu, %zu dips, persisted %llu/%llu, reopened %llu",
                 full.achieved, kAc6FullRate, full.max_depth, minimal.achieved, kAc6MinimalRate, minimal.max_depth,
                 cap, peak, dips, static_cast<unsigned long long>(over.persisted),
                 static_cast<unsigned long long>(over.offered), static_cast<unsigned long long>(over.reopened));
  return o;
}

Outcome ac7() {
  const std::vector<AnomalyClass> monotone = {AnomalyClass::NetworkLoss, AnomalyClass::Corrupt, AnomalyClass::Jitter,
                                              AnomalyClass::NetworkCongestion};
  std::size_t curves = 0, violations = 0;
  double worst_dup = 0;
  std::string first_bad;
  for (const auto& tb : builtin_testbeds()) {
    const auto pts = severity_sweep(tb, monotone, 7, 30);
    std::map<AnomalyClass, std::vector<SweepPoint>> by;
    for (const auto& p : pts) by[p.cls].push_back(p);
    for (auto& [cls, v] : by) {
      ++curves;
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.severity < b.severity; });
      for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i].mean_throughput > v[i - 1].mean_throughput) {
          ++violations;
          if (first_bad.empty())
            first_bad = fmt(" first: %s %s at %g", tb.id.c_str(), std::string(to_string(cls)).c_str(), v[i].severity);
        }
    }
    for (const auto& p : severity_sweep(tb, {AnomalyClass::Duplicate}, 7, 30))
      if (std::abs(p.severity - 0.45) < 1e-12)
        worst_dup = std::max(worst_dup, std::abs(p.mean_throughput / p.normal_throughput - 1));
  }
  Outcome o;
  o.pass = violations == 0 && curves == 4 * builtin_testbeds().size() && worst_dup <= kAc7DuplicateTolerance;
  o.detail = fmt("%zu curves, %zu increases; duplicate at 45%% within %.2f%% of normal (<= %.0f%%)", curves, violations,
                 worst_dup * 100, kAc7DuplicateTolerance * 100) +
             first_bad;
  return o;
}

Outcome ac8(const Corpus& c) {
  std::size_t runs = 0, violations = 0;
  double lo = 1, hi = 0;
  std::string first_bad;
  for (const auto& rows : c.rows) {
    std::map<std::string, std::pair<double, double>> sums;  // transfer -> (sum, n)
    std::map<std::string, AnomalyClass> labels;
    double normal_sum = 0, normal_n = 0;
    for (const auto& r : rows) {
      const double g = r.metrics[index_of(Minimal::TransferThroughput)];
      auto& s = sums[r.transfer_id];
      s.first += g;
      s.second += 1;
      labels[r.transfer_id] = r.label;
      if (r.label == AnomalyClass::Normal) {
        normal_sum += g;
        normal_n += 1;
      }
    }
    const double normal = normal_sum / normal_n;
    for (const auto& [id, s] : sums) {
      if (labels[id] == AnomalyClass::Normal) continue;
      ++runs;
      const double drop = 1 - s.first / s.second / normal;
      lo = std::min(lo, drop);
      hi = std::max(hi, drop);
      if (drop < kAc8MinDrop || drop > kAc8MaxDrop) {
        ++violations;
        if (first_bad.empty()) first_bad = fmt(" first: %s drop %.3f", id.c_str(), drop);
      }
    }
  }
  Outcome o;
  o.pass = violations == 0 && runs == builtin_testbeds().size() * 8 * 10;
  o.detail = fmt("%zu anomalous runs, drop range [%.3f, %.3f] within [%.2f, %.2f], %zu violations", runs, lo, hi,
                 kAc8MinDrop, kAc8MaxDrop, violations) +
             first_bad;
  return o;
}

Outcome ac9() {
  struct Named {
    const char* name;
    props::PropertyResult r;
  };
  std::vector<Named> results;
  results.push_back({"envelope round trip", props::envelope_roundtrip(2000, 9)});
  results.push_back({"sim invariants", props::sim_invariants(1000, 2024)});
  for (std::uint64_t seed : {11u, 12u, 13u})
    results.push_back({"scale invariance", props::classifier_scale_invariance(seed)});
  results.push_back({"F1 oracle", props::f1_matches_counting_oracle(100, 99)});
  const auto dir = scratch("ac9-crash");
  results.push_back({"crash prefix", props::crash_restart_prefix(dir, 3)});
  fs::remove_all(dir);

  Outcome o;
  o.pass = true;
  for (const auto& n : results) {
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("%s %s (%zu cases)", n.name, n.r.ok ? "ok" : n.r.detail.c_str(), n.r.cases);
    o.pass = o.pass && n.r.ok;
  }
  return o;
}

}  // namespace

int main() {
  const auto t0 = Wall::now();
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };
  Corpus corpus;
  std::string corpus_error;
  try {
    corpus = build_corpus();
  } catch (const std::exception& e) {
    corpus_error = e.what();
  }
  auto with_corpus = [&](Outcome (*f)(const Corpus&)) {
    if (!corpus_error.empty()) return Outcome{false, "corpus generation failed: " + corpus_error};
    return guarded([&] { return f(corpus); });
  };

  report("AC1", "rule engine macro-F1 per testbed", with_corpus(ac1));
  report("AC2", "cross-testbed transfer with normalization", with_corpus(ac2));
  report("AC3", "agent message rate scales linearly", guarded(ac3));
  report("AC4", "collection latency budget", guarded(ac4));
  report("AC5", "payload budget", guarded(ac5));
  report("AC6", "collector ingest throughput", guarded(ac6));
  report("AC7", "throughput versus severity", guarded(ac7));
  report("AC8", "anomalous runs drop 20-80%", with_corpus(ac8));
  report("AC9", "property suites", guarded(ac9));
  std::printf("%d of 9 criteria failed (%.1f s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
