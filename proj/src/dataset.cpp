#include "xfermon/dataset.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "xfermon/error.hpp"

namespace xfermon {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string run_suffix(int run) {
  std::ostringstream s;
  s << std::setw(3) << std::setfill('0') << run;
  return s.str();
}

std::vector<AnomalyClass> classes_or_all(const std::vector<AnomalyClass>& cls) {
  if (!cls.empty()) return cls;
  const auto all = label_classes();
  return {all.begin(), all.end()};
}

constexpr std::string_view kSchema = "xfermon.dataset";
constexpr int kSchemaVersion = 1;

}  // namespace

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) { return splitmix64(seed ^ fnv1a(tag)); }

std::vector<double> admissible_severities(AnomalyClass cls, const TestbedSpec& tb, const SimOptions& opts) {
  const double normal = steady_throughput(tb, std::nullopt, opts);
  std::vector<double> out;
  for (double s : severity_menu(cls, tb)) {
    AnomalySpec a;
    a.cls = cls;
    a.severity = s;
    const double drop = 1.0 - steady_throughput(tb, a, opts) / normal;
    if (drop >= kMinPlannedDrop && drop <= kMaxPlannedDrop) out.push_back(s);
  }
  return out;
}

std::vector<RunPlan> plan_runs(const TestbedSpec& tb, const GenOptions& opts) {
  if (opts.runs_per_class < 1) throw DomainError("runs_per_class must be >= 1");
  std::vector<RunPlan> plans;
  for (AnomalyClass cls : classes_or_all(opts.classes)) {
    if (!is_label(cls)) throw DomainError(std::string(to_string(cls)) + " is not a label class");
    const auto menu = cls == AnomalyClass::Normal ? std::vector<double>{} : admissible_severities(cls, tb, opts.sim);
    if (cls != AnomalyClass::Normal && menu.empty())
      throw DomainError("no severity of " + std::string(to_string(cls)) + " fits the drop band on " + tb.id);
    for (int r = 0; r < opts.runs_per_class; ++r) {
      RunPlan p;
      p.testbed_id = tb.id;
      p.label = cls;
      p.run = r;
      p.transfer_id = tb.id + "-" + std::string(to_string(cls)) + "-" + run_suffix(r);
      p.seed = mix_seed(opts.seed, p.transfer_id);
      if (!menu.empty()) {
        std::mt19937_64 rng(p.seed);
        std::uniform_int_distribution<std::size_t> pick(0, menu.size() - 1);
        p.severity = menu[pick(rng)];
      }
      plans.push_back(std::move(p));
    }
  }
  return plans;
}

SimRun make_sim_run(const TestbedSpec& tb, const RunPlan& plan, const GenOptions& opts) {
  SimRun run;
  run.testbed = tb;
  run.seed = plan.seed;
  run.duration_s = opts.duration_s;
  run.options = opts.sim;
  TransferJob job;
  job.transfer_id = plan.transfer_id;
  job.file_count = opts.file_count;
  job.file_size_bytes = opts.file_size_bytes;
  run.jobs.push_back(job);
  if (plan.label != AnomalyClass::Normal) {
    AnomalySpec a;
    a.cls = plan.label;
    a.severity = plan.severity;
    a.start_s = 0;
    a.end_s = opts.duration_s;
    run.anomalies.push_back(a);
  }
  return run;
}

std::vector<DatasetRow> simulate_run(const TestbedSpec& tb, const RunPlan& plan, const GenOptions& opts) {
  std::vector<DatasetRow> rows;
  run_simulation(make_sim_run(tb, plan, opts), [&](const StepOutput& out) {
    for (const auto& tr : out.transfers)
      rows.push_back({tb.id, tr.transfer_id, out.t, plan.label, tr.metrics});
  });
  return rows;
}

std::vector<DatasetRow> generate_dataset(const std::vector<TestbedSpec>& testbeds, const GenOptions& opts) {
  std::vector<DatasetRow> rows;
  for (const auto& tb : testbeds) {
    for (const auto& plan : plan_runs(tb, opts)) {
      auto r = simulate_run(tb, plan, opts);
      rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
  }
  return rows;
}

std::vector<DatasetRow> generate_normal_runs(const TestbedSpec& tb, int runs, const GenOptions& opts) {
  if (runs < 1) throw DomainError("need at least one normal run");
  std::vector<DatasetRow> rows;
  for (int r = 0; r < runs; ++r) {
    RunPlan p;
    p.testbed_id = tb.id;
    p.run = r;
    p.transfer_id = tb.id + "-baseline-" + run_suffix(r);
    p.seed = mix_seed(opts.seed ^ 0x5bd1e995ULL, p.transfer_id);
    auto out = simulate_run(tb, p, opts);
    rows.insert(rows.end(), out.begin(), out.end());
  }
  return rows;
}

nlohmann::ordered_json to_json(const DatasetRow& row) {
  nlohmann::ordered_json j;
  j["testbed_id"] = row.testbed_id;
  j["transfer_id"] = row.transfer_id;
  j["t"] = row.t;
  j["label"] = to_string(row.label);
  auto& m = j["metrics"] = nlohmann::ordered_json::object();
  const auto cat = catalog(Profile::Minimal14);
  for (std::size_t i = 0; i < kMinimalCount; ++i) m[cat[i].name] = row.metrics[i];
  return j;
}

DatasetRow row_from_json(const nlohmann::json& j) {
  try {
    DatasetRow row;
    row.testbed_id = j.at("testbed_id").get<std::string>();
    row.transfer_id = j.at("transfer_id").get<std::string>();
    row.t = j.at("t").get<std::int64_t>();
    const auto label = parse_anomaly_class(j.at("label").get<std::string>());
    if (!label || !is_label(*label)) throw DataError("unknown label " + j.at("label").dump());
    row.label = *label;
    const auto& m = j.at("metrics");
    const auto cat = catalog(Profile::Minimal14);
    for (std::size_t i = 0; i < kMinimalCount; ++i) {
      const auto it = m.find(cat[i].name);
      if (it == m.end()) throw DataError("row is missing metric " + cat[i].name);
      row.metrics[i] = it->is_null() ? std::nan("") : it->get<double>();
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset row: ") + e.what());
  }
}

void write_dataset(std::ostream& out, const std::vector<DatasetRow>& rows, std::string_view source) {
  nlohmann::ordered_json header;
  header["schema"] = kSchema;
  header["version"] = kSchemaVersion;
  header["source"] = source;
  header["rows"] = rows.size();
  out << header.dump() << '\n';
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

std::vector<DatasetRow> read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset is empty (no header)");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw DataError("dataset header is not JSON");
  }
  if (!header.is_object() || header.value("schema", "") != kSchema || header.value("version", 0) != kSchemaVersion)
    throw DataError("dataset header has the wrong schema");
  std::vector<DatasetRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("line " + std::to_string(lineno) + " is not JSON");
    }
    rows.push_back(row_from_json(j));
  }
  if (header.contains("rows") && header["rows"].get<std::size_t>() != rows.size())
    throw DataError("dataset row count does not match its header");
  return rows;
}

void write_dataset_file(const std::string& path, const std::vector<DatasetRow>& rows, std::string_view source) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  write_dataset(f, rows, source);
  if (!f) throw DataError("write failed for " + path);
}

std::vector<DatasetRow> read_dataset_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return read_dataset(f);
}

std::vector<SweepPoint> severity_sweep(const TestbedSpec& tb, const std::vector<AnomalyClass>& classes,
                                       std::uint64_t seed, std::int64_t duration_s, const SimOptions& opts) {
  const std::uint64_t run_seed = mix_seed(seed, "sweep/" + tb.id);
  auto mean_throughput = [&](std::optional<AnomalySpec> a) {
    SimRun run;
    run.testbed = tb;
    run.seed = run_seed;
    run.duration_s = duration_s;
    run.options = opts;
    run.jobs.push_back({"sweep", 1000, 3.0 * 1024 * 1024 * 1024, 0, 0, 0, 0});
    if (a) run.anomalies.push_back(*a);
    double sum = 0;
    std::int64_t n = 0;
    run_simulation(run, [&](const StepOutput& out) {
      for (const auto& tr : out.transfers) {
        sum += tr.metrics[index_of(Minimal::TransferThroughput)];
        ++n;
      }
    });
    return n ? sum / static_cast<double>(n) : 0.0;
  };
  const double normal = mean_throughput(std::nullopt);
  std::vector<SweepPoint> out;
  for (AnomalyClass cls : classes) {
    for (double s : severity_menu(cls, tb)) {
      AnomalySpec a;
      a.cls = cls;
      a.severity = s;
      a.end_s = duration_s;
      out.push_back({tb.id, cls, s, mean_throughput(a), normal});
    }
  }
  return out;
}

void write_curves_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "curve,x,y\n";
  out << std::setprecision(10);
  for (const auto& p : points)
    out << p.testbed_id << '/' << to_string(p.cls) << ',' << p.severity << ',' << p.mean_throughput << '\n';
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["args"] = args;
  j["config_hashes"] = config_hashes;
  j["seeds"] = seeds;
  j["outputs"] = outputs;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_hashes = j.value("config_hashes", std::map<std::string, std::string>{});
    m.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

void RunManifest::write(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write manifest " + path);
  f << to_json().dump(2) << '\n';
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path);
  try {
    return from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("manifest is not JSON: ") + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace xfermon
