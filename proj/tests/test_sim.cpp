#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support/properties.hpp"
#include "xfermon/error.hpp"
#include "xfermon/sim.hpp"

using namespace xfermon;

namespace {

double path_limit(const TestbedSpec& tb) {
  return std::min({tb.per_ost_disk_read_bytes_per_s, tb.per_ost_disk_write_bytes_per_s, tb.lnet_nic_bytes_per_s,
                   tb.wan_bandwidth_bytes_per_s,
                   tb.parallel_streams * tb.default_tcp_buf_max_bytes / (tb.rtt_us * 1e-6)});
}

SimRun single_job(const TestbedSpec& tb, std::int64_t duration, std::uint64_t seed) {
  SimRun run;
  run.testbed = tb;
  run.seed = seed;
  run.duration_s = duration;
  run.jobs.push_back({"job", 100, 3.0 * (1 << 30), 0, 0, 0, 0});
  return run;
}

}  // namespace

TEST(Testbeds, BuiltinsAreValid) {
  ASSERT_EQ(builtin_testbeds().size(), 8u);
  for (const auto& tb : builtin_testbeds()) {
    EXPECT_NO_THROW(tb.validate());
    EXPECT_GE(tb.default_tcp_buf_max_bytes, tb.bdp_bytes());
  }
  EXPECT_THROW(builtin_testbed("tb9"), NotFound);
}

TEST(Testbeds, ValidateRejects) {
  auto tb = builtin_testbed("tb1");
  tb.default_tcp_buf_max_bytes = tb.bdp_bytes() / 2;
  EXPECT_THROW(tb.validate(), DomainError);
  tb = builtin_testbed("tb1");
  tb.oss_count_per_side = 1;
  EXPECT_THROW(tb.validate(), DomainError);
}

TEST(Sim, NormalThroughputClosedForm) {
  for (const auto& tb : builtin_testbeds()) {
    const double expect = path_limit(tb) * (1 - 2e-5);
    EXPECT_NEAR(steady_throughput(tb, std::nullopt), expect, expect * 1e-12) << tb.id;
  }
}

TEST(Sim, LossThroughputClosedForm) {
  for (const auto& tb : builtin_testbeds()) {
    for (double p : kLossMenu) {
      const double mathis = tb.parallel_streams * tb.mss_bytes / (tb.rtt_us * 1e-6) * 1.22 / std::sqrt(p);
      const double expect = std::min(path_limit(tb), mathis) * (1 - (2e-5 + 1.25 * p));
      AnomalySpec a{AnomalyClass::NetworkLoss, p};
      EXPECT_NEAR(steady_throughput(tb, a), expect, expect * 1e-12) << tb.id << " p=" << p;
    }
  }
}

TEST(Sim, ReceiverBufferLimitsWindow) {
  const auto& tb = builtin_testbed("tb1");
  AnomalySpec a{AnomalyClass::ReceiverTcpBufferMisconfig, 2048};
  const double expect = std::min(path_limit(tb), tb.parallel_streams * 2048 / (tb.rtt_us * 1e-6)) * (1 - 2e-5);
  EXPECT_NEAR(steady_throughput(tb, a), expect, expect * 1e-12);
}

// Observed retransmissions are Bernoulli draws with the model's per-packet
// probability; the aggregate must sit within 4 sigma of it.
TEST(Sim, RetransmitRatioMatchesBernoulliModel) {
  const auto& tb = builtin_testbed("tb3");
  for (double p : {0.0005, 0.005}) {
    auto run = single_job(tb, 60, 99);
    run.anomalies.push_back({AnomalyClass::NetworkLoss, p});
    double retx = 0, sent = 0;
    run_simulation(run, [&](const StepOutput& out) {
      for (const auto& t : out.transfers) {
        retx += t.metrics[index_of(Minimal::SenderRetransmitted)];
        sent += t.metrics[index_of(Minimal::SenderTotalSent)];
      }
    });
    const double q = 2e-5 + 1.25 * p;
    const double sigma = std::sqrt(q * (1 - q) / sent);
    EXPECT_NEAR(retx / sent, q, 4 * sigma) << "p=" << p << " packets=" << sent;
  }
}

TEST(Sim, Deterministic) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const auto run = props::random_sim_run(rng);
    std::vector<StepOutput> a, b;
    run_simulation(run, [&](const StepOutput& o) { a.push_back(o); });
    run_simulation(run, [&](const StepOutput& o) { b.push_back(o); });
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      ASSERT_EQ(a[k].transfers.size(), b[k].transfers.size());
      for (std::size_t j = 0; j < a[k].transfers.size(); ++j)
        ASSERT_EQ(a[k].transfers[j].metrics, b[k].transfers[j].metrics);
      for (std::size_t h = 0; h < a[k].hosts.size(); ++h) ASSERT_EQ(a[k].hosts[h].counters, b[k].hosts[h].counters);
    }
  }
}

TEST(Sim, SeedChangesNoise) {
  const auto& tb = builtin_testbed("tb1");
  std::vector<double> a, b;
  run_simulation(single_job(tb, 5, 1), [&](const StepOutput& o) { a.push_back(o.transfers[0].metrics[13]); });
  run_simulation(single_job(tb, 5, 2), [&](const StepOutput& o) { b.push_back(o.transfers[0].metrics[13]); });
  EXPECT_NE(a, b);
}

TEST(Sim, InvariantsOverRandomRuns) {
  const auto r = props::sim_invariants(1000, 1234);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Sim, RejectsInvalidAnomalies) {
  const auto& tb = builtin_testbed("tb1");
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::NetworkLoss, 0.02}, tb), DomainError);
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::Jitter, 3000}, tb), DomainError);
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::SenderOstReadCongestion, 2.5}, tb), DomainError);
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::SenderOstReadCongestion, 2, 0, 10, 7}, tb), DomainError);
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::NetworkLoss, 0.01, 5, 5}, tb), DomainError);
  EXPECT_THROW(validate(AnomalySpec{AnomalyClass::Normal, 0}, tb), DomainError);

  Simulator sim(single_job(tb, 10, 1));
  sim.inject({AnomalyClass::NetworkLoss, 0.01, 0, 5});
  EXPECT_THROW(sim.inject({AnomalyClass::NetworkLoss, 0.005, 4, 8}), DomainError);
  EXPECT_NO_THROW(sim.inject({AnomalyClass::NetworkLoss, 0.005, 5, 8}));
}

TEST(Sim, RejectsInvalidJobs) {
  auto run = single_job(builtin_testbed("tb1"), 5, 1);
  run.jobs[0].source_ost_index = 3;
  EXPECT_THROW(Simulator{run}, DomainError);
  run = single_job(builtin_testbed("tb1"), 5, 1);
  run.jobs.push_back(run.jobs[0]);
  EXPECT_THROW(Simulator{run}, DomainError);
}

TEST(Sim, TransferFinishesAndDisappears) {
  auto run = single_job(builtin_testbed("tb5"), 10, 3);
  run.jobs[0].file_count = 1;
  run.jobs[0].file_size_bytes = 1.5e9;
  Simulator sim(run);
  std::size_t last = 1;
  while (!sim.finished()) last = sim.step().transfers.size();
  EXPECT_EQ(last, 0u);
  EXPECT_NEAR(sim.bytes_done("job"), 1.5e9, 1);
}

TEST(Sim, IoCongestionOnlyHitsTargetOst) {
  const auto& tb = builtin_testbed("tb1");
  const double normal = steady_throughput(tb, std::nullopt);
  EXPECT_LT(steady_throughput(tb, AnomalySpec{AnomalyClass::SenderOstReadCongestion, 8, 0, 1, 0}), 0.5 * normal);
  EXPECT_DOUBLE_EQ(steady_throughput(tb, AnomalySpec{AnomalyClass::SenderOstReadCongestion, 8, 0, 1, 1}), normal);
}
