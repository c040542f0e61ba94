#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "xfermon/dataset.hpp"
#include "xfermon/error.hpp"

using namespace xfermon;

namespace {

GenOptions small(int runs = 2, std::int64_t duration = 12) {
  GenOptions go;
  go.runs_per_class = runs;
  go.duration_s = duration;
  go.seed = 17;
  return go;
}

}  // namespace

TEST(Plan, NineClassesTimesRuns) {
  GenOptions go;
  const auto plans = plan_runs(builtin_testbed("tb1"), go);
  ASSERT_EQ(plans.size(), 90u);
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  std::map<AnomalyClass, int> per_class;
  for (const auto& p : plans) {
    ids.insert(p.transfer_id);
    seeds.insert(p.seed);
    ++per_class[p.label];
    if (p.label != AnomalyClass::Normal) {
      const auto menu = admissible_severities(p.label, builtin_testbed("tb1"));
      EXPECT_NE(std::find(menu.begin(), menu.end(), p.severity), menu.end());
    }
  }
  EXPECT_EQ(ids.size(), 90u);
  EXPECT_EQ(seeds.size(), 90u);
  for (auto c : label_classes()) EXPECT_EQ(per_class[c], 10);
  EXPECT_EQ(plans.front().transfer_id, "tb1-Normal-000");
}

TEST(Plan, RejectsNonLabelClass) {
  GenOptions go;
  go.classes = {AnomalyClass::Jitter};
  EXPECT_THROW(plan_runs(builtin_testbed("tb1"), go), DomainError);
  go.classes = {};
  go.runs_per_class = 0;
  EXPECT_THROW(plan_runs(builtin_testbed("tb1"), go), DomainError);
}

TEST(Plan, AdmissibleSeveritiesExistEverywhere) {
  for (const auto& tb : builtin_testbeds())
    for (auto c : label_classes()) {
      if (c == AnomalyClass::Normal) continue;
      const auto adm = admissible_severities(c, tb);
      EXPECT_FALSE(adm.empty()) << tb.id << " " << to_string(c);
      const double normal = steady_throughput(tb, std::nullopt);
      for (double s : adm) {
        AnomalySpec a{c, s};
        const double drop = 1 - steady_throughput(tb, a) / normal;
        EXPECT_GE(drop, kMinPlannedDrop);
        EXPECT_LE(drop, kMaxPlannedDrop);
      }
    }
}

TEST(Dataset, RowsPerRunAndLabels) {
  const auto go = small();
  const auto rows = generate_dataset({builtin_testbed("tb2")}, go);
  ASSERT_EQ(rows.size(), 9u * 2 * 12);
  for (const auto& r : rows) {
    EXPECT_EQ(r.testbed_id, "tb2");
    EXPECT_EQ(r.transfer_id.rfind("tb2-" + std::string(to_string(r.label)) + "-", 0), 0u);
  }
}

TEST(Dataset, SameSeedByteIdentical) {
  const auto go = small(1, 10);
  std::ostringstream a, b;
  write_dataset(a, generate_dataset({builtin_testbed("tb3")}, go), "sim");
  write_dataset(b, generate_dataset({builtin_testbed("tb3")}, go), "sim");
  EXPECT_EQ(a.str(), b.str());
  auto other = go;
  other.seed = 18;
  std::ostringstream c;
  write_dataset(c, generate_dataset({builtin_testbed("tb3")}, other), "sim");
  EXPECT_NE(a.str(), c.str());
}

TEST(Dataset, NdjsonRoundTrip) {
  const auto rows = generate_dataset({builtin_testbed("tb4")}, small(1, 10));
  std::stringstream ss;
  write_dataset(ss, rows, "sim");
  EXPECT_EQ(read_dataset(ss), rows);

  const auto path = std::filesystem::temp_directory_path() / "xfermon_ds_roundtrip.ndjson";
  write_dataset_file(path.string(), rows, "sim");
  EXPECT_EQ(read_dataset_file(path.string()), rows);
  std::filesystem::remove(path);
}

TEST(Dataset, EmptyHasHeader) {
  std::stringstream ss;
  write_dataset(ss, {}, "collector:none");
  std::string header;
  std::getline(ss, header);
  EXPECT_NE(header.find("\"rows\":0"), std::string::npos);
  ss.seekg(0);
  EXPECT_TRUE(read_dataset(ss).empty());
}

TEST(Dataset, MalformedInputRejected) {
  std::stringstream no_header;
  EXPECT_THROW(read_dataset(no_header), DataError);
  std::stringstream wrong_schema("{\"schema\":\"other\",\"version\":1}\n");
  EXPECT_THROW(read_dataset(wrong_schema), DataError);
  std::stringstream bad_line("{\"schema\":\"xfermon.dataset\",\"version\":1}\n{nope\n");
  EXPECT_THROW(read_dataset(bad_line), DataError);
  std::stringstream bad_count("{\"schema\":\"xfermon.dataset\",\"version\":1,\"rows\":3}\n");
  EXPECT_THROW(read_dataset(bad_count), DataError);
  std::stringstream bad_label(
      "{\"schema\":\"xfermon.dataset\",\"version\":1}\n"
      "{\"testbed_id\":\"tb1\",\"transfer_id\":\"x\",\"t\":0,\"label\":\"Sideways\",\"metrics\":{}}\n");
  EXPECT_THROW(read_dataset(bad_label), DataError);
}

TEST(Dataset, SeverityDropStaysInBand) {
  const auto go = small(3, 20);
  for (const char* id : {"tb2", "tb6"}) {
    const auto& tb = builtin_testbed(id);
    const auto normal = generate_normal_runs(tb, 3, go);
    double nsum = 0;
    for (const auto& r : normal) nsum += r.metrics[index_of(Minimal::TransferThroughput)];
    const double nmean = nsum / static_cast<double>(normal.size());
    std::map<std::string, std::pair<double, int>> runs;
    std::map<std::string, AnomalyClass> label;
    for (const auto& r : generate_dataset({tb}, go)) {
      auto& [s, n] = runs[r.transfer_id];
      s += r.metrics[index_of(Minimal::TransferThroughput)];
      ++n;
      label[r.transfer_id] = r.label;
    }
    for (const auto& [tid, sn] : runs) {
      if (label[tid] == AnomalyClass::Normal) continue;
      const double drop = 1 - sn.first / sn.second / nmean;
      EXPECT_GE(drop, 0.2) << tid;
      EXPECT_LE(drop, 0.8) << tid;
    }
  }
}

TEST(Sweep, LossCurveIsMonotone) {
  const auto pts = severity_sweep(builtin_testbed("tb1"), {AnomalyClass::NetworkLoss}, 5, 20);
  ASSERT_EQ(pts.size(), kLossMenu.size());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GT(pts[i].severity, pts[i - 1].severity);
    EXPECT_LE(pts[i].mean_throughput, pts[i - 1].mean_throughput);
  }
  std::ostringstream csv;
  write_curves_csv(csv, pts);
  EXPECT_EQ(csv.str().rfind("curve,x,y\n", 0), 0u);
  EXPECT_NE(csv.str().find("tb1/NetworkLoss,"), std::string::npos);
}

TEST(Seeds, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_NE(mix_seed(1, "tb1-Normal-000"), mix_seed(1, "tb1-Normal-001"));
  EXPECT_NE(mix_seed(1, "x"), mix_seed(2, "x"));
}

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.command = "gen";
  m.args = {"xfermon", "gen", "--out", "d.ndjson"};
  m.config_hashes["config"] = "abc";
  m.seeds["seed"] = 42;
  m.outputs = {"d.ndjson"};
  m.started_at = "2026-01-01T00:00:00Z";
  m.finished_at = "2026-01-01T00:00:01Z";
  const auto back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_THROW(RunManifest::from_json(nlohmann::json::object()), DataError);
}
