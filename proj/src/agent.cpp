#include "xfermon/agent.hpp"

#include <algorithm>
#include <set>

#include "xfermon/codec.hpp"
#include "xfermon/error.hpp"

namespace xfermon {
namespace {

std::optional<double> ost_field(const OstCounters& c, std::string_view field) {
  if (field == "read_bytes_per_s") return c.read_bytes_per_s;
  if (field == "write_bytes_per_s") return c.write_bytes_per_s;
  if (field == "read_iops") return c.read_iops;
  if (field == "write_iops") return c.write_iops;
  return std::nullopt;
}

std::optional<double> lookup(const CounterSet& set, std::string_view field) {
  if (auto it = set.find(field); it != set.end()) return it->second;
  return std::nullopt;
}

}  // namespace

Clock::duration SteadyClock::now() const {
  return std::chrono::duration_cast<duration>(std::chrono::steady_clock::now().time_since_epoch());
}

void World::publish(std::shared_ptr<const StepOutput> step) {
  std::lock_guard lk(mu_);
  latest_ = std::move(step);
}

std::shared_ptr<const StepOutput> World::latest() const {
  std::lock_guard lk(mu_);
  return latest_;
}

Upstream::Upstream(const World& world, UpstreamCosts costs) : world_(world), costs_(costs) {}

std::shared_ptr<const HostSnapshot> Upstream::fetch_host(const std::string& id) {
  host_fetches_.fetch_add(1);
  if (costs_.host_fetch.count() > 0) std::this_thread::sleep_for(costs_.host_fetch);
  if (failing_) throw RuntimeFailure("host command failed on " + id);
  const auto step = world_.latest();
  if (!step) throw NotFound("no data yet for " + id);
  for (const auto& h : step->hosts)
    if (h.host_id == id) return {step, &h};
  throw NotFound("unknown host " + id);
}

std::shared_ptr<const OssSnapshot> Upstream::fetch_oss(const std::string& id) {
  oss_fetches_.fetch_add(1);
  if (costs_.oss_fetch.count() > 0) std::this_thread::sleep_for(costs_.oss_fetch);
  if (failing_) throw RuntimeFailure("OSS request failed on " + id);
  const auto step = world_.latest();
  if (!step) throw NotFound("no data yet for " + id);
  for (const auto& o : step->oss)
    if (o.oss_id == id) return {step, &o};
  throw NotFound("unknown OSS " + id);
}

std::vector<std::string> host_ids(const TestbedSpec& tb) {
  std::vector<std::string> out;
  for (Side s : {Side::Sender, Side::Receiver})
    for (int h = 0; h < tb.client_count_per_side; ++h) out.push_back(host_id(tb, s, h));
  return out;
}

std::vector<std::string> oss_ids(const TestbedSpec& tb) {
  std::vector<std::string> out;
  for (Side s : {Side::Sender, Side::Receiver})
    for (int i = 0; i < tb.oss_count_per_side; ++i) out.push_back(oss_id(tb, s, i));
  return out;
}

CachedSource::CachedSource(const HostCache& hosts, const OssCache& oss, const Clock& clock, Clock::duration interval,
                           double stale_after)
    : hosts_(hosts),
      oss_(oss),
      clock_(clock),
      max_age_(std::chrono::duration_cast<Clock::duration>(interval * stale_after)) {}

template <class T>
Fetched<T> CachedSource::read(const SnapshotCache<T>& cache, const std::string& id) const {
  const auto e = cache.get(id);
  if (!e) return {};
  return {e->snapshot, clock_.now() - e->fetched_at > max_age_};
}

Fetched<HostSnapshot> CachedSource::host(const std::string& id) { return read(hosts_, id); }
Fetched<OssSnapshot> CachedSource::oss(const std::string& id) { return read(oss_, id); }

Fetched<HostSnapshot> DirectSource::host(const std::string& id) {
  try {
    return {upstream_.fetch_host(id), false};
  } catch (const std::exception&) {
    return {};
  }
}

Fetched<OssSnapshot> DirectSource::oss(const std::string& id) {
  try {
    return {upstream_.fetch_oss(id), false};
  } catch (const std::exception&) {
    return {};
  }
}

PublisherQueue::PublisherQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw DomainError("publisher queue capacity must be positive");
}

PublishResult PublisherQueue::push(std::vector<std::uint8_t> payload) {
  PublishResult r = PublishResult::Queued;
  {
    std::lock_guard lk(mu_);
    if (items_.size() >= capacity_) {
      items_.pop_front();
      dropped_.fetch_add(1);
      r = PublishResult::Dropped;
    }
    items_.push_back(std::move(payload));
  }
  cv_.notify_one();
  return r;
}

std::size_t PublisherQueue::pop_batch(std::vector<std::vector<std::uint8_t>>& out, std::size_t max,
                                      std::chrono::milliseconds wait) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, wait, [&] { return closed_ || !items_.empty(); });
  std::size_t n = 0;
  while (!items_.empty() && n < max) {
    out.push_back(std::move(items_.front()));
    items_.pop_front();
    ++n;
  }
  return n;
}

void PublisherQueue::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::size_t PublisherQueue::size() const {
  std::lock_guard lk(mu_);
  return items_.size();
}

void TcpFrameSink::send(std::span<const std::uint8_t> frames) {
  if (!sock_.valid()) sock_ = connect_tcp(ep_, std::chrono::milliseconds(500));
  try {
    sock_.send_all(frames);
  } catch (...) {
    sock_.close();
    throw;
  }
}

Publisher::Publisher(std::unique_ptr<FrameSink> sink, std::size_t capacity, bool synchronous)
    : sink_(std::move(sink)), queue_(capacity), synchronous_(synchronous) {}

Publisher::~Publisher() { stop(false, std::chrono::milliseconds(0)); }

PublishResult Publisher::publish(const MetricEnvelope& env) {
  auto payload = encode(env);
  published_.fetch_add(1);
  if (!synchronous_) return queue_.push(std::move(payload));
  std::lock_guard lk(sync_mu_);
  try {
    sink_->send(frame(payload));
    sent_.fetch_add(1);
    return PublishResult::Acked;
  } catch (const std::exception&) {
    failures_.fetch_add(1);
    sync_dropped_.fetch_add(1);
    return PublishResult::Dropped;
  }
}

void Publisher::start() {
  if (synchronous_ || thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this] { transmit_loop(); });
}

void Publisher::stop(bool drain, std::chrono::milliseconds timeout) {
  if (drain && thread_.joinable()) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while ((queue_.size() > 0 || in_flight_ > 0) && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  stop_ = true;
  queue_.close();
  if (thread_.joinable()) thread_.join();
}

void Publisher::transmit_loop() {
  std::vector<std::vector<std::uint8_t>> batch;
  std::vector<std::uint8_t> buf;
  auto backoff = std::chrono::milliseconds(20);
  while (true) {
    if (batch.empty()) {
      if (stop_) break;
      queue_.pop_batch(batch, 512, std::chrono::milliseconds(50));
      if (batch.empty()) continue;
      in_flight_ = batch.size();
    }
    buf.clear();
    for (const auto& p : batch) append_frame(buf, p);
    try {
      sink_->send(buf);
      sent_.fetch_add(batch.size());
      batch.clear();
      in_flight_ = 0;
      backoff = std::chrono::milliseconds(20);
    } catch (const std::exception&) {
      failures_.fetch_add(1);
      if (stop_) break;
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, std::chrono::milliseconds(1000));
    }
  }
  sync_dropped_.fetch_add(batch.size());
  in_flight_ = 0;
}

PublisherStats Publisher::stats() const {
  PublisherStats s;
  s.published = published_;
  s.sent = sent_;
  s.dropped = queue_.dropped() + sync_dropped_;
  s.send_failures = failures_;
  s.queued = queue_.size() + in_flight_;
  return s;
}

Agent::Agent(TestbedSpec tb, int dtn, SnapshotSource& source, Profile profile)
    : tb_(std::move(tb)), dtn_(dtn), host_id_(host_id(tb_, Side::Sender, dtn)), source_(source), profile_(profile) {}

std::vector<std::string> Agent::discover_transfers() {
  const auto s = source_.host(host_id_);
  std::vector<std::string> out;
  if (!s.snapshot) return out;
  for (const auto& [id, tc] : s.snapshot->transfers) out.push_back(id);
  return out;
}

MetricEnvelope Agent::collect(const std::string& transfer_id, std::int64_t tick) {
  MetricEnvelope gap;
  gap.transfer_id = transfer_id;
  gap.testbed_id = tb_.id;
  gap.timestamp = tick;
  gap.profile = profile_;
  gap.gap = true;

  const auto s = source_.host(host_id_);
  if (!s.snapshot || s.stale) return gap;
  const auto st = s.snapshot->transfers.find(transfer_id);
  if (st == s.snapshot->transfers.end()) return gap;
  const auto r = source_.host(st->second.peer_host);
  if (!r.snapshot || r.stale) return gap;
  const auto rt = r.snapshot->transfers.find(transfer_id);
  if (rt == r.snapshot->transfers.end()) return gap;

  std::map<std::string, Fetched<OssSnapshot>> oss_seen;
  auto oss_for = [&](Side side, int ost) -> const OssSnapshot* {
    const auto id = oss_id(tb_, side, ost);
    auto it = oss_seen.find(id);
    if (it == oss_seen.end()) it = oss_seen.emplace(id, source_.oss(id)).first;
    return it->second.snapshot && !it->second.stale ? it->second.snapshot.get() : nullptr;
  };

  MetricEnvelope env;
  env.transfer_id = transfer_id;
  env.testbed_id = tb_.id;
  env.timestamp = s.snapshot->t;
  env.profile = profile_;
  for (const auto& k : catalog(profile_)) {
    const bool snd = k.side == Side::Sender;
    const HostSnapshot& h = snd ? *s.snapshot : *r.snapshot;
    const TransferCounters& tc = snd ? st->second : rt->second;
    std::optional<double> v;
    switch (k.source) {
      case Source::Host: v = lookup(h.counters, k.field); break;
      case Source::Transfer: v = lookup(tc.values, k.field); break;
      case Source::TransferOst:
        if (const auto* o = oss_for(k.side, tc.ost_index)) v = ost_field(o->ost, k.field);
        break;
      case Source::OstSlot:
        if (const auto* o = oss_for(k.side, k.ost_slot)) v = ost_field(o->ost, k.field);
        break;
    }
    if (!v) return gap;
    env.values.emplace(k.id, *v);
  }
  return env;
}

TickStats Agent::tick(std::int64_t tick, Publisher& publisher) {
  const auto start = std::chrono::steady_clock::now();
  TickStats st;
  st.tick = tick;
  const auto ids = discover_transfers();
  st.active = ids.size();
  const std::set<std::string> present(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const auto env = collect(id, tick);
    auto last = last_t_.find(id);
    if (last == last_t_.end()) {
      ++st.opened;
    } else if (env.timestamp <= last->second) {
      ++st.duplicates_skipped;
      continue;
    }
    if (publisher.publish(env) == PublishResult::Dropped) ++st.dropped;
    ++st.published;
    if (env.gap) ++st.gaps;
    last_t_[id] = env.timestamp;
  }
  for (auto it = last_t_.begin(); it != last_t_.end();) {
    if (!present.contains(it->first)) {
      it = last_t_.erase(it);
      ++st.closed;
    } else {
      ++it;
    }
  }
  published_total_ += st.published;
  gaps_total_ += st.gaps;
  st.collect_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return st;
}

}  // namespace xfermon
