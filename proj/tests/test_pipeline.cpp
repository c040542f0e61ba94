#include <gtest/gtest.h>

#include <unistd.h>

#include "xfermon/dataset.hpp"
#include "xfermon/error.hpp"
#include "xfermon/pipeline.hpp"

using namespace xfermon;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("xfermon-pipe-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

// Rows exported from the collector after a lockstep run must equal the rows
// the dataset generator reads straight from the simulator.
TEST(Pipeline, CollectorExportReplaysSimulatorTruth) {
  GenOptions go;
  go.runs_per_class = 1;
  go.duration_s = 12;
  for (const char* id : {"tb1", "tb6"}) {
    const auto& tb = builtin_testbed(id);
    for (const auto& plan : plan_runs(tb, go)) {
      const auto dir = scratch(plan.transfer_id);
      CollectorConfig cfg;
      cfg.data_dir = dir;
      Collector collector(cfg);
      Publisher pub(std::make_unique<CollectorSink>(collector), 1000, true);
      const auto rep = run_lockstep(make_sim_run(tb, plan, go), pub, Profile::Minimal14);
      collector.flush();
      EXPECT_EQ(rep.gaps, 0u);
      EXPECT_EQ(rep.steps, go.duration_s);

      const auto expected = simulate_run(tb, plan, go);
      const auto got = collector.export_rows(tb.id, {{plan.transfer_id, plan.label}});
      ASSERT_EQ(got.size(), expected.size()) << plan.transfer_id;
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], expected[i]) << plan.transfer_id << " row " << i;
      collector.stop();
      fs::remove_all(dir);
    }
  }
}

TEST(Pipeline, CachedAndDirectAgree) {
  GenOptions go;
  go.runs_per_class = 1;
  go.duration_s = 5;
  const auto& tb = builtin_testbed("tb3");
  const auto plan = plan_runs(tb, go).at(3);
  std::vector<std::vector<DatasetRow>> exports;
  for (bool cache : {true, false}) {
    const auto dir = scratch(cache ? "cached" : "direct");
    CollectorConfig cfg;
    cfg.data_dir = dir;
    Collector collector(cfg);
    Publisher pub(std::make_unique<CollectorSink>(collector), 1000, true);
    const auto rep = run_lockstep(make_sim_run(tb, plan, go), pub, Profile::Full142, cache);
    collector.flush();
    if (cache) {
      // one refresh per simulated second
      EXPECT_EQ(rep.host_fetches, host_ids(tb).size() * 5);
      EXPECT_EQ(rep.oss_fetches, oss_ids(tb).size() * 5);
    }
    exports.push_back(collector.export_rows(tb.id));
    collector.stop();
    fs::remove_all(dir);
  }
  EXPECT_EQ(exports[0], exports[1]);
  EXPECT_EQ(exports[0].size(), 5u);
}

TEST(Pipeline, RampRunShape) {
  RealtimeOptions o;
  o.testbed = builtin_testbed("tb1");
  o.ticks = 6;
  o.ramp = {{0, 4}, {3, 10}};
  const auto run = ramp_run(o);
  ASSERT_EQ(run.jobs.size(), 10u);
  EXPECT_EQ(run.jobs[3].start_s, 0);
  EXPECT_EQ(run.jobs[4].start_s, 3);
  EXPECT_EQ(run.duration_s, 7);
  o.ramp = {{0, 4}, {3, 2}};
  EXPECT_THROW(ramp_run(o), DomainError);
}

TEST(Pipeline, RealtimeShortRamp) {
  const auto dir = scratch("realtime");
  CollectorConfig cfg;
  cfg.data_dir = dir;
  Collector collector(cfg);
  RealtimeOptions o;
  o.testbed = builtin_testbed("tb2");
  o.interval = 200ms;
  o.ticks = 6;
  o.ramp = {{0, 5}, {3, 15}};
  o.costs = UpstreamCosts{1000us, 2000us};
  o.make_sink = [&] { return std::make_unique<CollectorSink>(collector); };
  const auto rep = run_realtime(o);
  collector.flush();
  ASSERT_EQ(rep.ticks.size(), 6u);
  for (const auto& t : rep.ticks) {
    EXPECT_EQ(t.active, t.tick < 3 ? 5u : 15u) << t.tick;
    EXPECT_EQ(t.published, t.active);
    EXPECT_EQ(t.gaps, 0u);
  }
  EXPECT_EQ(rep.publisher.dropped, 0u);
  EXPECT_EQ(rep.publisher.sent, 3u * 5 + 3u * 15);
  EXPECT_EQ(collector.stats().persisted_total, 60u);
  collector.stop();
  fs::remove_all(dir);
}

TEST(Pipeline, StatsText) {
  IngestStats s;
  s.persisted_total = 7;
  const auto text = stats_text(s);
  EXPECT_NE(text.find("persisted_total 7\n"), std::string::npos);
  EXPECT_NE(text.find("queue_depth 0\n"), std::string::npos);
}
