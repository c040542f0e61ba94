#include "xfermon/collector.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "xfermon/codec.hpp"
#include "xfermon/error.hpp"

namespace xfermon {
namespace fs = std::filesystem;
namespace {

constexpr std::string_view kSegmentPrefix = "segment-";
constexpr std::string_view kSegmentSuffix = ".ndjson";

bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    if (c < 0x80)
      n = 0;
    else if ((c >> 5) == 0x6)
      n = 1;
    else if ((c >> 4) == 0xe)
      n = 2;
    else if ((c >> 3) == 0x1e)
      n = 3;
    else
      return false;
    if (i + n >= s.size()) return false;
    for (std::size_t k = 1; k <= n; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += n + 1;
  }
  return true;
}

void append_json_string(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (ch == '"' || ch == '\\') {
      out.push_back('\\');
      out.push_back(ch);
    } else if (c < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\u%04x", c);
      out.append(buf);
    } else {
      out.push_back(ch);
    }
  }
  out.push_back('"');
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

void append_record(std::string& out, const MetricEnvelope& env) {
  out.append("{\"transfer_id\":");
  append_json_string(out, env.transfer_id);
  out.append(",\"testbed_id\":");
  append_json_string(out, env.testbed_id);
  out.append(",\"t\":");
  out.append(std::to_string(env.timestamp));
  out.append(",\"profile\":\"");
  out.append(to_string(env.profile));
  out.append(env.gap ? "\",\"gap\":true,\"values\":{" : "\",\"gap\":false,\"values\":{");
  bool first = true;
  for (const auto& [id, v] : env.values) {
    if (!first) out.push_back(',');
    first = false;
    out.push_back('"');
    out.append(key(id).name);
    out.append("\":");
    append_number(out, v);
  }
  out.append("}}\n");
}

MetricEnvelope parse_record(const nlohmann::json& j) {
  MetricEnvelope env;
  env.transfer_id = j.at("transfer_id").get<std::string>();
  env.testbed_id = j.at("testbed_id").get<std::string>();
  env.timestamp = j.at("t").get<std::int64_t>();
  const auto profile = parse_profile(j.at("profile").get<std::string>());
  if (!profile) throw DataError("unknown profile in segment");
  env.profile = *profile;
  env.gap = j.at("gap").get<bool>();
  for (const auto& [name, v] : j.at("values").items()) {
    const auto id = find_key(name);
    if (!id) throw DataError("unknown key " + name + " in segment");
    env.values.emplace(*id, v.get<double>());
  }
  return env;
}

std::vector<fs::path> list_segments(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with(kSegmentPrefix) && name.ends_with(kSegmentSuffix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string segment_name(std::size_t n) {
  std::ostringstream s;
  s << kSegmentPrefix << std::setw(6) << std::setfill('0') << n << kSegmentSuffix;
  return s.str();
}

std::optional<AnomalyClass> label_from_id(const std::string& run_id, const std::string& transfer_id) {
  const std::string prefix = run_id + "-";
  if (!transfer_id.starts_with(prefix)) return std::nullopt;
  const auto rest = std::string_view(transfer_id).substr(prefix.size());
  const auto dash = rest.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  const auto cls = parse_anomaly_class(rest.substr(0, dash));
  if (!cls || !is_label(*cls)) return std::nullopt;
  return cls;
}

}  // namespace

std::size_t repair_segments(const fs::path& dir) {
  std::size_t removed = 0;
  for (const auto& path : list_segments(dir)) {
    std::ifstream in(path, std::ios::binary);
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::size_t good = 0;
    while (good < data.size()) {
      const auto nl = data.find('\n', good);
      if (nl == std::string::npos) break;
      try {
        parse_record(nlohmann::json::parse(std::string_view(data).substr(good, nl - good)));
      } catch (const std::exception&) {
        break;
      }
      good = nl + 1;
    }
    if (good < data.size()) {
      removed += data.size() - good;
      fs::resize_file(path, good);
    }
  }
  return removed;
}

Collector::Collector(CollectorConfig config) : config_(std::move(config)) {
  if (config_.data_dir.empty()) throw DomainError("collector needs a data directory");
  if (config_.batch_max == 0) throw DomainError("batch_max must be positive");
  fs::create_directories(config_.data_dir);
  repair_segments(config_.data_dir);
  load();
  open_segment();
  writer_ = std::thread([this] { writer_loop(); });
}

Collector::~Collector() { stop(); }

void Collector::stop() {
  {
    std::lock_guard lk(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (writer_.joinable()) writer_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Collector::load() {
  for (const auto& path : list_segments(config_.data_dir)) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      MetricEnvelope env;
      try {
        env = parse_record(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw DataError("corrupt segment " + path.string() + ": " + e.what());
      }
      if (accept_locked(env)) persisted_.fetch_add(1);
    }
    const auto name = path.filename().string();
    segment_no_ = std::max<std::size_t>(segment_no_, std::stoul(name.substr(kSegmentPrefix.size())));
  }
}

void Collector::open_segment() {
  if (fd_ >= 0) ::close(fd_);
  ++segment_no_;
  const auto path = config_.data_dir / segment_name(segment_no_);
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw RuntimeFailure("cannot open segment " + path.string());
  segment_bytes_ = 0;
}

// Caller must be the writer (or the constructor) and hold index_mu_ exclusively
// when queries may run.
bool Collector::accept_locked(const MetricEnvelope& env) {
  auto it = index_.find(env.transfer_id);
  if (it != index_.end()) {
    auto& ti = it->second;
    if (ti.rows.contains(env.timestamp) || env.timestamp <= ti.max_t - config_.dedup_window_s) return false;
  } else {
    it = index_.emplace(env.transfer_id, TransferIndex{env.testbed_id, {}, env.timestamp}).first;
  }
  auto& ti = it->second;
  Stored s;
  s.t = env.timestamp;
  s.gap = env.gap;
  s.profile = env.profile;
  if (!env.gap) {
    s.values.assign(catalog(env.profile).size(), std::nan(""));
    for (const auto& [id, v] : env.values) s.values[to_index(id)] = v;
  }
  ti.rows.emplace(env.timestamp, std::move(s));
  ti.max_t = std::max(ti.max_t, env.timestamp);
  return true;
}

SubmitResult Collector::submit_payload(std::span<const std::uint8_t> payload) {
  MetricEnvelope env;
  try {
    env = decode(payload);
  } catch (const DataError&) {
    received_.fetch_add(1);
    rejected_.fetch_add(1);
    return SubmitResult::Rejected;
  }
  return submit(std::move(env));
}

SubmitResult Collector::submit(MetricEnvelope env) {
  received_.fetch_add(1);
  if (!validate(env).empty() || !valid_utf8(env.transfer_id) || !valid_utf8(env.testbed_id)) {
    rejected_.fetch_add(1);
    return SubmitResult::Rejected;
  }
  {
    std::lock_guard lk(queue_mu_);
    if (stopping_) {
      rejected_.fetch_add(1);
      return SubmitResult::Rejected;
    }
    queue_.push_back(std::move(env));
    ++enqueued_;
  }
  queue_cv_.notify_one();
  return SubmitResult::Accepted;
}

void Collector::writer_loop() {
  using clock = std::chrono::steady_clock;
  std::deque<std::pair<clock::time_point, std::uint64_t>> samples;
  auto next_allowed = clock::now();
  std::vector<MetricEnvelope> batch;
  std::string buf;
  for (;;) {
    batch.clear();
    {
      std::unique_lock lk(queue_mu_);
      queue_cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty() && stopping_) {
        writer_done_ = true;
        drained_cv_.notify_all();
        break;
      }
      std::size_t limit = config_.batch_max;
      if (config_.max_persist_per_s > 0)
        limit = std::min(limit, std::max<std::size_t>(1, static_cast<std::size_t>(config_.max_persist_per_s / 50)));
      while (!queue_.empty() && batch.size() < limit) {
        batch.push_back(std::move(queue_.front()));
        queue_.pop_front();
      }
    }

    auto write_out = [&] {
      std::size_t off = 0;
      while (off < buf.size()) {
        const ssize_t n = ::write(fd_, buf.data() + off, buf.size() - off);
        if (n < 0) {
          if (errno == EINTR) continue;
          break;  // disk failure: records stay indexed but the segment stops growing
        }
        off += static_cast<std::size_t>(n);
      }
      segment_bytes_ += off;
      buf.clear();
      if (segment_bytes_ >= config_.segment_max_bytes) open_segment();
    };
    buf.clear();
    std::size_t accepted = 0;
    {
      std::unique_lock lk(index_mu_);
      for (const auto& env : batch) {
        if (!accept_locked(env)) {
          duplicates_.fetch_add(1);
          rejected_.fetch_add(1);
          continue;
        }
        append_record(buf, env);
        ++accepted;
        if (segment_bytes_ + buf.size() >= config_.segment_max_bytes) write_out();
      }
    }
    write_out();
    persisted_.fetch_add(accepted);

    const auto now = clock::now();
    samples.emplace_back(now, persisted_.load());
    while (samples.size() > 1 && now - samples.front().first > std::chrono::seconds(1)) samples.pop_front();
    const double span = std::chrono::duration<double>(now - samples.front().first).count();
    rate_.store(span > 0 ? static_cast<double>(samples.back().second - samples.front().second) / span : 0.0);

    {
      std::lock_guard lk(queue_mu_);
      processed_ += batch.size();
    }
    drained_cv_.notify_all();

    if (config_.max_persist_per_s > 0) {
      next_allowed += std::chrono::duration_cast<clock::duration>(
          std::chrono::duration<double>(static_cast<double>(batch.size()) / config_.max_persist_per_s));
      if (next_allowed < now - std::chrono::seconds(1)) next_allowed = now;
      std::this_thread::sleep_until(next_allowed);
    }
  }
}

void Collector::flush() {
  std::unique_lock lk(queue_mu_);
  const std::uint64_t target = enqueued_;
  drained_cv_.wait(lk, [&] { return processed_ >= target || writer_done_; });
}

IngestStats Collector::stats() const {
  IngestStats s;
  {
    std::lock_guard lk(queue_mu_);
    s.queue_depth = queue_.size();
  }
  s.msgs_per_s = rate_.load();
  s.persisted_total = persisted_.load();
  s.reject_total = rejected_.load();
  s.duplicate_total = duplicates_.load();
  s.received_total = received_.load();
  return s;
}

QueryResult Collector::query(const std::string& transfer_id, std::int64_t t0, std::int64_t t1,
                             std::vector<std::string> keys) const {
  if (keys.empty())
    for (const auto& k : catalog(Profile::Minimal14)) keys.push_back(k.name);
  std::vector<std::size_t> ids;
  for (const auto& k : keys) {
    const auto id = find_key(k);
    if (!id) throw DomainError("unknown metric key " + k);
    ids.push_back(to_index(*id));
  }
  QueryResult out;
  out.keys = std::move(keys);
  std::shared_lock lk(index_mu_);
  const auto it = index_.find(transfer_id);
  if (it == index_.end()) throw NotFound("unknown transfer " + transfer_id);
  for (auto r = it->second.rows.lower_bound(t0); r != it->second.rows.end() && r->first <= t1; ++r) {
    QueryRow row;
    row.t = r->first;
    row.gap = r->second.gap;
    for (std::size_t id : ids) {
      if (!row.gap && id < r->second.values.size())
        row.values.emplace_back(r->second.values[id]);
      else
        row.values.emplace_back(std::nullopt);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<std::string> Collector::transfers() const {
  std::shared_lock lk(index_mu_);
  std::vector<std::string> out;
  for (const auto& [id, ti] : index_) out.push_back(id);
  return out;
}

std::vector<DatasetRow> Collector::export_rows(const std::string& run_id,
                                               const std::map<std::string, AnomalyClass>& labels) const {
  std::vector<DatasetRow> out;
  std::shared_lock lk(index_mu_);
  for (const auto& [id, ti] : index_) {
    if (ti.testbed_id != run_id) continue;
    AnomalyClass label = AnomalyClass::Normal;
    if (auto l = labels.find(id); l != labels.end())
      label = l->second;
    else if (auto parsed = label_from_id(run_id, id))
      label = *parsed;
    for (const auto& [t, s] : ti.rows) {
      if (s.gap) continue;
      DatasetRow row;
      row.testbed_id = ti.testbed_id;
      row.transfer_id = id;
      row.t = t;
      row.label = label;
      std::copy_n(s.values.begin(), kMinimalCount, row.metrics.begin());
      out.push_back(std::move(row));
    }
  }
  return out;
}

void Collector::export_dataset(std::ostream& out, const std::string& run_id,
                               const std::map<std::string, AnomalyClass>& labels) const {
  write_dataset(out, export_rows(run_id, labels), "collector:" + run_id);
}

IngestServer::IngestServer(Collector& collector, const Endpoint& listen) : collector_(collector), listener_(listen) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

IngestServer::~IngestServer() { stop(); }

void IngestServer::stop() {
  if (stop_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(mu_);
    for (auto& c : conns_) c->shutdown();
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

void IngestServer::accept_loop() {
  while (!stop_) {
    auto s = listener_.accept(std::chrono::milliseconds(100));
    if (!s) continue;
    auto sock = std::make_shared<Socket>(std::move(*s));
    std::lock_guard lk(mu_);
    conns_.push_back(sock);
    threads_.emplace_back([this, sock] { serve(sock); });
  }
}

void IngestServer::serve(std::shared_ptr<Socket> sock) {
  std::vector<std::uint8_t> payload;
  try {
    for (;;) {
      std::array<std::uint8_t, kFrameHeader> header{};
      if (!sock->recv_exact(header)) break;
      const std::uint32_t len = read_frame_length(header);
      if (len > kMaxFrame) {
        resets_.fetch_add(1);
        break;
      }
      payload.resize(len);
      if (len > 0 && !sock->recv_exact(payload)) break;
      collector_.submit_payload(payload);
    }
  } catch (const RuntimeFailure&) {
  }
  sock->shutdown();
}

QueryServer::QueryServer(const Collector& collector, const Endpoint& listen)
    : collector_(collector), listener_(listen) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

QueryServer::~QueryServer() { stop(); }

void QueryServer::stop() {
  if (stop_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(mu_);
    for (auto& c : conns_) c->shutdown();
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

void QueryServer::accept_loop() {
  while (!stop_) {
    auto s = listener_.accept(std::chrono::milliseconds(100));
    if (!s) continue;
    auto sock = std::make_shared<Socket>(std::move(*s));
    std::lock_guard lk(mu_);
    conns_.push_back(sock);
    threads_.emplace_back([this, sock] {
      std::string buffer;
      try {
        while (auto line = sock->read_line(buffer)) {
          if (line->empty()) continue;
          sock->send_all(handle(collector_, *line));
        }
      } catch (const RuntimeFailure&) {
      }
      sock->shutdown();
    });
  }
}

std::string QueryServer::handle(const Collector& collector, const std::string& line) {
  std::istringstream in(line);
  std::string cmd;
  in >> cmd;
  auto error = [](const std::string& msg) { return nlohmann::json{{"error", msg}}.dump() + "\n"; };
  if (cmd == "STATS") {
    const auto s = collector.stats();
    nlohmann::ordered_json j;
    j["msgs_per_s"] = s.msgs_per_s;
    j["queue_depth"] = s.queue_depth;
    j["persisted_total"] = s.persisted_total;
    j["reject_total"] = s.reject_total;
    j["duplicate_total"] = s.duplicate_total;
    j["received_total"] = s.received_total;
    return j.dump() + "\n";
  }
  if (cmd != "QUERY") return error("unknown command");
  std::string id, t0s, t1s;
  if (!(in >> id >> t0s >> t1s)) return error("usage: QUERY <transfer_id> <t0> <t1> [keys...]");
  std::int64_t t0 = 0, t1 = 0;
  try {
    t0 = std::stoll(t0s);
    t1 = std::stoll(t1s);
  } catch (const std::exception&) {
    return error("t0 and t1 must be integers");
  }
  std::vector<std::string> keys;
  for (std::string k; in >> k;) keys.push_back(k);
  try {
    const auto res = collector.query(id, t0, t1, keys);
    std::string out;
    for (const auto& row : res.rows) {
      nlohmann::ordered_json j;
      j["transfer_id"] = id;
      j["t"] = row.t;
      j["gap"] = row.gap;
      auto& vals = j["values"] = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < res.keys.size(); ++i)
        vals[res.keys[i]] = row.values[i] ? nlohmann::ordered_json(*row.values[i]) : nlohmann::ordered_json();
      out += j.dump() + "\n";
    }
    out += nlohmann::json{{"end", true}, {"rows", res.rows.size()}}.dump() + "\n";
    return out;
  } catch (const NotFound& e) {
    return error(e.what());
  } catch (const DomainError& e) {
    return error(e.what());
  }
}

}  // namespace xfermon
