// xfermon command-line entry point.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "xfermon/collector.hpp"
#include "xfermon/config.hpp"
#include "xfermon/dataset.hpp"
#include "xfermon/diagnose.hpp"
#include "xfermon/error.hpp"
#include "xfermon/evaluate.hpp"
#include "xfermon/pipeline.hpp"

using namespace xfermon;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};

struct Context {
  std::uint64_t seed = 1;
  std::string config_path;
  Config config;
  std::vector<std::string> argv;
  std::string started_at;
};

std::vector<TestbedSpec> pick_testbeds(const std::string& spec) {
  if (spec == "all") return builtin_testbeds();
  std::vector<TestbedSpec> out;
  std::stringstream ss(spec);
  for (std::string id; std::getline(ss, id, ',');) out.push_back(builtin_testbed(id));
  if (out.empty()) throw UsageError("no testbed given");
  return out;
}

std::vector<AnomalyClass> pick_classes(const std::string& spec, bool labels_only) {
  std::vector<AnomalyClass> out;
  if (spec.empty()) return out;
  std::stringstream ss(spec);
  for (std::string name; std::getline(ss, name, ',');) {
    const auto c = parse_anomaly_class(name);
    if (!c) throw UsageError("unknown class " + name);
    if (labels_only && !is_label(*c)) throw UsageError(name + " is not a label class");
    out.push_back(*c);
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return in;
}

void write_manifest(const Context& ctx, const std::string& command, const std::vector<std::string>& outputs,
                    const std::string& path) {
  RunManifest m;
  m.command = command;
  m.args = ctx.argv;
  m.config_hashes["config"] = ctx.config.hash();
  m.seeds["seed"] = ctx.seed;
  m.outputs = outputs;
  m.started_at = ctx.started_at;
  m.finished_at = utc_timestamp();
  m.write(path);
}

GenOptions gen_options(const Context& ctx) {
  GenOptions go;
  go.seed = ctx.seed;
  go.sim = ctx.config.sim();
  return go;
}

std::map<std::string, BaselineProfile> load_baselines(const std::string& path) {
  std::map<std::string, BaselineProfile> out;
  auto in = open_in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("baseline " + path + ": " + e.what());
  }
  if (j.is_object()) j = nlohmann::json::array({j});
  if (!j.is_array()) throw DataError("baseline file must hold a profile or an array of profiles");
  for (const auto& p : j) {
    auto b = BaselineProfile::from_json(p);
    out[b.testbed_id] = std::move(b);
  }
  return out;
}

int cmd_gen(Context& ctx, const std::string& testbeds, const std::string& classes, int runs, std::int64_t duration,
            const std::string& out_path) {
  auto go = gen_options(ctx);
  go.classes = pick_classes(classes, true);
  go.runs_per_class = runs;
  go.duration_s = duration;
  const auto rows = generate_dataset(pick_testbeds(testbeds), go);
  write_dataset_file(out_path, rows, "sim");
  write_manifest(ctx, "gen", {out_path}, out_path + ".manifest.json");
  std::cerr << "wrote " << rows.size() << " rows to " << out_path << '\n';
  return 0;
}

int cmd_sweep(Context& ctx, const std::string& testbeds, const std::string& classes, std::int64_t duration,
              const std::string& out_path) {
  auto cls = pick_classes(classes, false);
  if (cls.empty())
    for (std::size_t c = 1; c < kAnomalyClassCount; ++c) cls.push_back(static_cast<AnomalyClass>(c));
  std::vector<SweepPoint> points;
  for (const auto& tb : pick_testbeds(testbeds)) {
    auto p = severity_sweep(tb, cls, ctx.seed, duration, ctx.config.sim());
    points.insert(points.end(), p.begin(), p.end());
  }
  auto out = open_out(out_path);
  write_curves_csv(out, points);
  out.close();
  write_manifest(ctx, "sweep", {out_path}, out_path + ".manifest.json");
  return 0;
}

int cmd_baseline(Context& ctx, const std::string& testbeds, int runs, const std::string& out_path) {
  auto go = gen_options(ctx);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& tb : pick_testbeds(testbeds)) arr.push_back(fit_baseline(generate_normal_runs(tb, runs, go), tb).to_json());
  auto out = open_out(out_path);
  out << arr.dump(2) << '\n';
  out.close();
  write_manifest(ctx, "baseline", {out_path}, out_path + ".manifest.json");
  return 0;
}

int cmd_pipeline(Context& ctx, const std::string& testbed, int transfers, int ramp_step, std::int64_t ramp_every,
                 std::int64_t duration, std::string addr, const std::string& profile, bool no_cache,
                 const std::string& data_dir) {
  const auto agent = ctx.config.agent();
  RealtimeOptions opts;
  opts.testbed = builtin_testbed(testbed);
  opts.sim = ctx.config.sim();
  opts.seed = ctx.seed;
  opts.interval = agent.interval;
  opts.costs = agent.costs;
  opts.queue_capacity = agent.queue_capacity;
  opts.use_cache = !no_cache;
  opts.profile = agent.profile;
  if (!profile.empty()) {
    const auto p = parse_profile(profile);
    if (!p) throw UsageError("profile must be Minimal14 or Full142");
    opts.profile = *p;
  }
  if (transfers < 1) throw UsageError("--transfers must be positive");
  opts.ramp.clear();
  if (ramp_step <= 0) {
    opts.ramp.push_back({0, transfers});
  } else {
    std::int64_t at = 0;
    for (int n = std::min(ramp_step, transfers);; n = std::min(n + ramp_step, transfers), at += ramp_every) {
      opts.ramp.push_back({at, n});
      if (n == transfers) break;
    }
  }
  opts.ticks = duration > 0 ? duration : opts.ramp.back().at_tick + ramp_every;
  if (addr.empty()) addr = agent.collector;

  std::unique_ptr<Collector> local;
  if (addr == "inproc") {
    auto store = ctx.config.collector().store;
    if (!data_dir.empty()) store.data_dir = data_dir;
    local = std::make_unique<Collector>(store);
    opts.make_sink = [&] { return std::make_unique<CollectorSink>(*local); };
  } else {
    const auto ep = parse_endpoint(addr);
    for (int attempt = 0;; ++attempt) {
      try {
        connect_tcp(ep, std::chrono::milliseconds(500));
        break;
      } catch (const RuntimeFailure&) {
        if (attempt == 4) throw RuntimeFailure("collector at " + addr + " is unreachable");
        std::this_thread::sleep_for(std::chrono::milliseconds(400));
      }
    }
    opts.make_sink = [ep] { return std::make_unique<TcpFrameSink>(ep); };
  }
  opts.on_tick = [](const TickReport& t) {
    std::printf("tick %lld active %zu published %zu gaps %zu dropped %zu collect_ms %.2f\n",
                static_cast<long long>(t.tick), t.active, t.published, t.gaps, t.dropped, t.collect_seconds * 1e3);
    std::fflush(stdout);
  };
  const auto rep = run_realtime(opts);
  std::printf("published %llu sent %llu dropped %llu send_failures %llu\n",
              static_cast<unsigned long long>(rep.publisher.published),
              static_cast<unsigned long long>(rep.publisher.sent),
              static_cast<unsigned long long>(rep.publisher.dropped),
              static_cast<unsigned long long>(rep.publisher.send_failures));
  if (local) {
    local->flush();
    std::fputs(stats_text(local->stats()).c_str(), stdout);
    local->stop();
  }
  return 0;
}

int cmd_collect(Context& ctx, std::string listen, std::string query_listen, const std::string& data_dir,
                double duration) {
  auto svc = ctx.config.collector();
  if (!data_dir.empty()) svc.store.data_dir = data_dir;
  if (listen.empty()) listen = svc.listen;
  if (query_listen.empty()) query_listen = svc.query_listen;
  Collector collector(svc.store);
  IngestServer ingest(collector, parse_endpoint(listen));
  QueryServer query(collector, parse_endpoint(query_listen));
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  std::printf("ingest 127.0.0.1:%u query 127.0.0.1:%u\n", ingest.port(), query.port());
  std::fflush(stdout);
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::seconds(1));
    const auto s = collector.stats();
    std::printf("msgs_per_s %.1f queue_depth %zu persisted %llu rejected %llu\n", s.msgs_per_s, s.queue_depth,
                static_cast<unsigned long long>(s.persisted_total), static_cast<unsigned long long>(s.reject_total));
    std::fflush(stdout);
    if (duration > 0 && std::chrono::steady_clock::now() - start >= std::chrono::duration<double>(duration)) break;
  }
  ingest.stop();
  query.stop();
  collector.flush();
  collector.stop();
  return 0;
}

int cmd_query(Context& ctx, const std::string& addr, const std::string& data_dir, const std::string& transfer,
              std::int64_t t0, std::int64_t t1, const std::vector<std::string>& keys) {
  std::string line = "QUERY " + transfer + " " + std::to_string(t0) + " " + std::to_string(t1);
  for (const auto& k : keys) {
    if (!find_key(k)) throw DomainError("unknown metric key " + k);
    line += " " + k;
  }
  std::string response;
  if (!data_dir.empty()) {
    auto store = ctx.config.collector().store;
    store.data_dir = data_dir;
    Collector collector(store);
    response = QueryServer::handle(collector, line);
    collector.stop();
  } else {
    auto sock = connect_tcp(parse_endpoint(addr.empty() ? ctx.config.collector().query_listen : addr));
    sock.send_all(line + "\n");
    std::string buf;
    while (auto l = sock.read_line(buf)) {
      response += *l + "\n";
      if (l->rfind("{\"end\"", 0) == 0 || l->rfind("{\"error\"", 0) == 0) break;
    }
  }
  std::fputs(response.c_str(), stdout);
  if (response.rfind("{\"error\"", 0) == 0) {
    const auto msg = nlohmann::json::parse(response)["error"].get<std::string>();
    if (msg.rfind("unknown transfer", 0) == 0) throw NotFound(msg);
    throw DataError(msg);
  }
  return 0;
}

std::vector<DatasetRow> load_rows(Context& ctx, const std::string& dataset, const std::string& run,
                                  const std::string& data_dir) {
  if (!dataset.empty() && !run.empty()) throw UsageError("give --dataset or --collector-run, not both");
  if (!dataset.empty()) return read_dataset_file(dataset);
  if (run.empty()) throw UsageError("--dataset or --collector-run is required");
  auto store = ctx.config.collector().store;
  if (!data_dir.empty()) store.data_dir = data_dir;
  Collector collector(store);
  auto rows = collector.export_rows(run);
  collector.stop();
  return rows;
}

int cmd_diagnose(Context& ctx, const std::string& dataset, const std::string& run, const std::string& data_dir,
                 const std::string& baseline_path, const std::string& rules_path, const std::string& out_path) {
  const auto rows = load_rows(ctx, dataset, run, data_dir);
  RuleConfig rules = ctx.config.rules();
  if (!rules_path.empty()) {
    auto in = open_in(rules_path);
    try {
      rules = RuleConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("rules " + rules_path + ": " + e.what());
    } catch (const DomainError& e) {
      throw DataError(e.what());
    }
  }
  auto baselines = baseline_path.empty() ? std::map<std::string, BaselineProfile>{} : load_baselines(baseline_path);
  std::map<std::string, std::vector<DatasetRow>> by_tb;
  for (const auto& r : rows) by_tb[r.testbed_id].push_back(r);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  for (const auto& [tb_id, tb_rows] : by_tb) {
    auto it = baselines.find(tb_id);
    if (it == baselines.end()) {
      if (!baseline_path.empty()) throw DataError("no baseline for testbed " + tb_id);
      const auto& tb = builtin_testbed(tb_id);
      it = baselines.emplace(tb_id, fit_baseline(generate_normal_runs(tb, 5, gen_options(ctx)), tb)).first;
    }
    for (const auto& d : diagnose_rows(tb_rows, it->second, rules)) {
      auto j = d.to_json();
      nlohmann::ordered_json rec;
      rec["testbed_id"] = tb_id;
      for (auto& [k, v] : j.items()) rec[k] = v;
      *out << rec.dump() << '\n';
    }
  }
  if (!out_path.empty()) {
    file.close();
    write_manifest(ctx, "diagnose", {out_path}, out_path + ".manifest.json");
  }
  return 0;
}

int cmd_score(Context& ctx, const std::string& pred_path, const std::string& truth_path, const std::string& out_path) {
  const auto rules = ctx.config.rules();
  const auto truth_rows = read_dataset_file(truth_path);
  std::map<std::pair<std::string, std::int64_t>, AnomalyClass> truth;
  for (const auto& w : make_windows(truth_rows, rules.window_s)) truth[{w.transfer_id, w.t0}] = w.label;

  auto in = open_in(pred_path);
  std::vector<AnomalyClass> pred, labels;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("transfer_id").get<std::string>();
      const auto t0 = j.at("t0").get<std::int64_t>();
      const auto label = parse_anomaly_class(j.at("label").get<std::string>());
      if (!label || !is_label(*label)) throw DataError("bad label");
      const auto it = truth.find({id, t0});
      if (it == truth.end()) throw DataError("no truth window for " + id + " at " + std::to_string(t0));
      pred.push_back(*label);
      labels.push_back(it->second);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(pred_path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(pred_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const auto report = score(pred, labels);
  std::cout << report.table();
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    out << report.to_json().dump() << '\n';
    out.close();
    write_manifest(ctx, "score", {out_path}, out_path + ".manifest.json");
  }
  return 0;
}

int cmd_export(Context& ctx, const std::string& data_dir, const std::string& run, const std::string& out_path) {
  auto store = ctx.config.collector().store;
  if (!data_dir.empty()) store.data_dir = data_dir;
  Collector collector(store);
  {
    auto out = open_out(out_path);
    collector.export_dataset(out, run);
  }
  collector.stop();
  write_manifest(ctx, "export", {out_path}, out_path + ".manifest.json");
  return 0;
}

int cmd_evaluate(Context& ctx, const std::string& testbeds, int runs, const std::string& out_dir) {
  EvalOptions eo;
  eo.gen = gen_options(ctx);
  eo.gen.runs_per_class = runs;
  eo.rules = ctx.config.rules();
  fs::create_directories(out_dir);
  const auto scores_path = (fs::path(out_dir) / "scores.ndjson").string();
  const auto raw_path = (fs::path(out_dir) / "transfer_raw.csv").string();
  const auto norm_path = (fs::path(out_dir) / "transfer_normalized.csv").string();

  std::vector<std::vector<WindowSample>> raw, norm;
  std::vector<std::string> ids;
  auto scores = open_out(scores_path);
  std::printf("%-8s %10s %10s %8s\n", "testbed", "macro_f1", "accuracy", "windows");
  for (const auto& tb : pick_testbeds(testbeds)) {
    auto ev = evaluate_testbed(tb, eo);
    std::printf("%-8s %10.4f %10.4f %8zu\n", tb.id.c_str(), ev.report.macro_f1, ev.report.accuracy,
                ev.report.total);
    auto j = ev.report.to_json();
    j["testbed_id"] = tb.id;
    scores << j.dump() << '\n';
    ids.push_back(tb.id);
    raw.push_back(std::move(ev.windows));
    norm.push_back(std::move(ev.normalized_windows));
  }
  scores.close();
  const auto m_raw = transfer_matrix(raw, ids);
  const auto m_norm = transfer_matrix(norm, ids);
  {
    auto o = open_out(raw_path);
    write_matrix_csv(o, m_raw);
  }
  {
    auto o = open_out(norm_path);
    write_matrix_csv(o, m_norm);
  }
  std::printf("cross-testbed macro_f1 raw %.4f normalized %.4f\n", m_raw.off_diagonal_mean(),
              m_norm.off_diagonal_mean());
  write_manifest(ctx, "evaluate", {scores_path, raw_path, norm_path},
                 (fs::path(out_dir) / "manifest.json").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.argv.assign(argv, argv + argc);
  ctx.started_at = utc_timestamp();

  CLI::App app{"xfermon: transfer monitoring, anomaly simulation and diagnosis"};
  app.require_subcommand(1);
  app.add_option("--seed", ctx.seed, "Random seed")->default_val(1);
  app.add_option("--config", ctx.config_path, "JSON config file")->check(CLI::ExistingFile);

  std::function<int()> action;
  std::string testbeds = "all", testbed = "tb1", classes, out, dataset, run, data_dir, baseline, rules, pred, truth,
              addr, listen, query_listen, profile, transfer, keys;
  int runs = 10, transfers = 400, ramp_step = 100, baseline_runs = 5;
  std::int64_t duration = 30, ticks = 0, ramp_every = 10, t0 = 0, t1 = std::numeric_limits<std::int64_t>::max();
  double serve_s = 0;
  bool no_cache = false;

  auto* gen = app.add_subcommand("gen", "Generate a labeled dataset");
  gen->add_option("--testbed", testbeds, "Testbed ids, comma separated, or all");
  gen->add_option("--classes", classes, "Label classes, comma separated (default all nine)");
  gen->add_option("--runs-per-class", runs)->check(CLI::PositiveNumber);
  gen->add_option("--duration", duration, "Seconds per run")->check(CLI::PositiveNumber);
  gen->add_option("--out", out)->required();
  gen->callback([&] { action = [&] { return cmd_gen(ctx, testbeds, classes, runs, duration, out); }; });

  auto* sweep = app.add_subcommand("sweep", "Throughput versus severity curves as CSV");
  sweep->add_option("--testbed", testbeds);
  sweep->add_option("--classes", classes);
  sweep->add_option("--duration", duration)->check(CLI::PositiveNumber);
  sweep->add_option("--out", out)->required();
  sweep->callback([&] { action = [&] { return cmd_sweep(ctx, testbeds, classes, duration, out); }; });

  auto* base = app.add_subcommand("baseline", "Fit baseline profiles from normal runs");
  base->add_option("--testbed", testbeds);
  base->add_option("--runs", baseline_runs)->check(CLI::PositiveNumber);
  base->add_option("--out", out)->required();
  base->callback([&] { action = [&] { return cmd_baseline(ctx, testbeds, baseline_runs, out); }; });

  auto* pipe = app.add_subcommand("pipeline", "Run live agents on a simulated testbed");
  pipe->add_option("--testbed", testbed);
  pipe->add_option("--transfers", transfers);
  pipe->add_option("--ramp-step", ramp_step, "Transfers added per stage (0 = all at once)");
  pipe->add_option("--ramp-every", ramp_every, "Ticks between stages")->check(CLI::PositiveNumber);
  pipe->add_option("--duration", ticks, "Ticks to run (default: ramp length plus one stage)");
  pipe->add_option("--collector-addr", addr, "host:port, or inproc for an in-process store");
  pipe->add_option("--data-dir", data_dir, "Store directory for --collector-addr inproc");
  pipe->add_option("--profile", profile, "Minimal14 or Full142");
  pipe->add_flag("--no-cache", no_cache, "Read upstream directly instead of through caches");
  pipe->callback([&] {
    action = [&] {
      return cmd_pipeline(ctx, testbed, transfers, ramp_step, ramp_every, ticks, addr, profile, no_cache, data_dir);
    };
  });

  auto* coll = app.add_subcommand("collect", "Run the collector service");
  coll->add_option("--listen", listen);
  coll->add_option("--query-listen", query_listen);
  coll->add_option("--data-dir", data_dir);
  coll->add_option("--duration", serve_s, "Seconds to serve (0 = until interrupted)");
  coll->callback([&] { action = [&] { return cmd_collect(ctx, listen, query_listen, data_dir, serve_s); }; });

  auto* query = app.add_subcommand("query", "Query a transfer's time series");
  query->add_option("transfer", transfer)->required();
  query->add_option("--from", t0);
  query->add_option("--to", t1);
  query->add_option("--keys", keys, "Metric names, comma separated (default minimal set)");
  query->add_option("--addr", addr, "Query endpoint");
  query->add_option("--data-dir", data_dir, "Read a store directly instead");
  query->callback([&] {
    action = [&] {
      std::vector<std::string> ks;
      std::stringstream ss(keys);
      for (std::string k; std::getline(ss, k, ',');) ks.push_back(k);
      return cmd_query(ctx, addr, data_dir, transfer, t0, t1, ks);
    };
  });

  auto* diag = app.add_subcommand("diagnose", "Classify windows with the rule engine");
  diag->add_option("--dataset", dataset);
  diag->add_option("--collector-run", run, "Testbed id of a run stored by the collector");
  diag->add_option("--data-dir", data_dir);
  diag->add_option("--baseline", baseline, "Baseline profile JSON (default: fit from fresh normal runs)");
  diag->add_option("--rules", rules, "Rule config JSON");
  diag->add_option("--out", out);
  diag->callback([&] {
    action = [&] { return cmd_diagnose(ctx, dataset, run, data_dir, baseline, rules, out); };
  });

  auto* sc = app.add_subcommand("score", "Score diagnoses against a labeled dataset");
  sc->add_option("--pred", pred)->required();
  sc->add_option("--truth", truth)->required();
  sc->add_option("--out", out);
  sc->callback([&] { action = [&] { return cmd_score(ctx, pred, truth, out); }; });

  auto* ex = app.add_subcommand("export", "Export a stored run as a dataset");
  ex->add_option("--data-dir", data_dir);
  ex->add_option("--run", run)->required();
  ex->add_option("--out", out)->required();
  ex->callback([&] { action = [&] { return cmd_export(ctx, data_dir, run, out); }; });

  auto* ev = app.add_subcommand("evaluate", "Per-testbed rule scores and transfer matrices");
  ev->add_option("--testbed", testbeds);
  ev->add_option("--runs-per-class", runs)->check(CLI::PositiveNumber);
  ev->add_option("--out-dir", out)->required();
  ev->callback([&] { action = [&] { return cmd_evaluate(ctx, testbeds, runs, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    ctx.config = Config::load(ctx.config_path);
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NotFound& e) {
    std::cerr << "not found: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 3;
  }
}
