#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / ("xfermon-cli-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  static const struct Cleanup {
    ~Cleanup() { fs::remove_all(dir); }
  } cleanup;
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  const auto out = workdir() / "stdout.txt";
  const std::string cmd = env + " " XFERMON_CLI_PATH " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("gen --runs-per-class 0 --out " + path("x.ndjson")).code, 1);
  EXPECT_EQ(run("gen --classes Jitter --out " + path("x.ndjson")).code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("gen --testbed tb99 --out " + path("x.ndjson")).code, 2);
  EXPECT_EQ(run("diagnose --dataset " + path("missing.ndjson")).code, 2);
  std::ofstream(path("junk.ndjson")) << "not a dataset\n";
  EXPECT_EQ(run("diagnose --dataset " + path("junk.ndjson")).code, 2);
  fs::create_directories(path("emptystore"));
  EXPECT_EQ(run("query nothing --data-dir " + path("emptystore")).code, 2);
}

TEST(Cli, UnreachableCollectorExitsThree) {
  const auto r = run("pipeline --testbed tb1 --transfers 1 --duration 1 --collector-addr 127.0.0.1:1",
                     "XFERMON_AGENT_INTERVAL_MS=100");
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST(Cli, GenIsDeterministicAndComplete) {
  ASSERT_EQ(run("gen --testbed tb2 --duration 10 --out " + path("a.ndjson")).code, 0);
  ASSERT_EQ(run("gen --testbed tb2 --duration 10 --out " + path("b.ndjson")).code, 0);
  const auto a = slurp(path("a.ndjson"));
  EXPECT_EQ(a, slurp(path("b.ndjson")));
  EXPECT_NE(a, "");

  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  std::set<std::string> runs;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    runs.insert(nlohmann::json::parse(line)["transfer_id"].get<std::string>());
    ++rows;
  }
  EXPECT_EQ(runs.size(), 90u);
  EXPECT_EQ(rows, 900u);

  const auto manifest = nlohmann::json::parse(slurp(path("a.ndjson") + ".manifest.json"));
  EXPECT_EQ(manifest["command"], "gen");
  EXPECT_TRUE(manifest.contains("seeds"));

  ASSERT_EQ(run("--seed 2 gen --testbed tb2 --duration 10 --out " + path("c.ndjson")).code, 0);
  EXPECT_NE(a, slurp(path("c.ndjson")));
}

TEST(Cli, DiagnoseAndScore) {
  ASSERT_EQ(run("gen --testbed tb4 --runs-per-class 2 --duration 20 --out " + path("d.ndjson")).code, 0);
  ASSERT_EQ(run("diagnose --dataset " + path("d.ndjson") + " --out " + path("pred.ndjson")).code, 0);
  std::istringstream in(slurp(path("pred.ndjson")));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("fired_rule"));
    EXPECT_EQ(j["testbed_id"], "tb4");
  }
  EXPECT_EQ(n, 9u * 2 * 2);
  const auto s = run("score --pred " + path("pred.ndjson") + " --truth " + path("d.ndjson") + " --out " +
                     path("score.json"));
  ASSERT_EQ(s.code, 0) << s.out;
  const auto score = nlohmann::json::parse(slurp(path("score.json")));
  EXPECT_GE(score["macro_f1"].get<double>(), 0.95);
}

TEST(Cli, PipelineExportQuery) {
  const auto store = path("store");
  const auto r = run("pipeline --testbed tb1 --transfers 4 --duration 3 --collector-addr inproc --data-dir " + store,
                     "XFERMON_AGENT_INTERVAL_MS=200");
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_EQ(run("export --data-dir " + store + " --run tb1 --out " + path("export.ndjson")).code, 0);
  std::istringstream in(slurp(path("export.ndjson")));
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(nlohmann::json::parse(header)["schema"], "xfermon.dataset");
  const auto row = nlohmann::json::parse(first);
  const auto id = row["transfer_id"].get<std::string>();

  const auto q = run("query " + id + " --data-dir " + store + " --keys transfer_throughput_bytes_per_s,sender_rtt_us");
  ASSERT_EQ(q.code, 0) << q.out;
  std::istringstream qs(q.out);
  std::string qline;
  std::getline(qs, qline);
  EXPECT_EQ(nlohmann::json::parse(qline)["values"].size(), 2u);

  EXPECT_EQ(run("query " + id + " --data-dir " + store + " --keys no_such_metric").code, 1);
}

TEST(Cli, DefaultDurationIsThirtySeconds) {
  ASSERT_EQ(run("gen --testbed tb1 --runs-per-class 1 --out " + path("def.ndjson")).code, 0);
  std::istringstream in(slurp(path("def.ndjson")));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(nlohmann::json::parse(header)["rows"], 9 * 30);
  const auto s = run("sweep --testbed tb1 --classes NetworkLoss --out " + path("curves.csv"));
  ASSERT_EQ(s.code, 0) << s.out;
  EXPECT_EQ(slurp(path("curves.csv")).rfind("curve,x,y\n", 0), 0u);
}
