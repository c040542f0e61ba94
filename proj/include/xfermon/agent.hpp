#pragma once

// Monitoring plane of a sender DTN: upstream counter sources, the host and
// OSS caches with their background refresher, the agent that discovers
// transfers and assembles envelopes, and the publisher that ships frames.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "xfermon/metrics.hpp"
#include "xfermon/net.hpp"
#include "xfermon/sim.hpp"

namespace xfermon {

class Clock {
 public:
  using duration = std::chrono::nanoseconds;
  virtual ~Clock() = default;
  virtual duration now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  duration now() const override;
};

class ManualClock final : public Clock {
 public:
  duration now() const override { return duration(now_.load()); }
  void advance(duration d) { now_.fetch_add(d.count()); }
  void set(duration d) { now_.store(d.count()); }

 private:
  std::atomic<duration::rep> now_{0};
};

// Latest simulator output, swapped in by whoever drives the simulation.
class World {
 public:
  void publish(std::shared_ptr<const StepOutput> step);
  std::shared_ptr<const StepOutput> latest() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const StepOutput> latest_;
};

// Simulated cost of the commands and RPCs that produce raw counters.
struct UpstreamCosts {
  std::chrono::microseconds host_fetch{10000};
  std::chrono::microseconds oss_fetch{20000};
};

// The per-host commands and OSS RPCs the caches front. Every fetch pays its
// configured cost.
class Upstream {
 public:
  Upstream(const World& world, UpstreamCosts costs = {});

  // Throw NotFound when the id is not in the latest step, RuntimeFailure
  // while failures are injected.
  std::shared_ptr<const HostSnapshot> fetch_host(const std::string& host_id);
  std::shared_ptr<const OssSnapshot> fetch_oss(const std::string& oss_id);

  void set_failing(bool failing) { failing_ = failing; }
  std::uint64_t host_fetches() const { return host_fetches_; }
  std::uint64_t oss_fetches() const { return oss_fetches_; }

 private:
  const World& world_;
  UpstreamCosts costs_;
  std::atomic<bool> failing_{false};
  std::atomic<std::uint64_t> host_fetches_{0};
  std::atomic<std::uint64_t> oss_fetches_{0};
};

// In-memory snapshots for a fixed set of ids, refreshed by one background
// thread per cache. Readers get immutable shared snapshots and never fetch.
template <class T>
class SnapshotCache {
 public:
  using Fetch = std::function<std::shared_ptr<const T>(const std::string&)>;
  struct Entry {
    std::shared_ptr<const T> snapshot;
    Clock::duration fetched_at{};
  };

  SnapshotCache(Fetch fetch, const Clock& clock, std::vector<std::string> ids)
      : fetch_(std::move(fetch)), clock_(clock), ids_(std::move(ids)) {}
  ~SnapshotCache() { stop(); }
  SnapshotCache(const SnapshotCache&) = delete;
  SnapshotCache& operator=(const SnapshotCache&) = delete;

  // Fetches every id once. A failed fetch keeps the previous entry, which
  // then ages into staleness.
  void refresh_once() {
    for (const auto& id : ids_) {
      std::shared_ptr<const T> snap;
      try {
        snap = fetch_(id);
      } catch (const std::exception&) {
        failures_.fetch_add(1);
        continue;
      }
      std::unique_lock lk(mu_);
      entries_[id] = Entry{std::move(snap), clock_.now()};
    }
    refreshes_.fetch_add(1);
  }

  std::optional<Entry> get(const std::string& id) const {
    std::shared_lock lk(mu_);
    if (auto it = entries_.find(id); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  // Oldest entry age, or nullopt before the first refresh.
  std::optional<Clock::duration> max_age() const {
    std::shared_lock lk(mu_);
    if (entries_.empty()) return std::nullopt;
    Clock::duration oldest = Clock::duration::max();
    for (const auto& [id, e] : entries_) oldest = std::min(oldest, e.fetched_at);
    return clock_.now() - oldest;
  }

  // Refreshes at epoch + phase + k * interval until stopped.
  void start(std::chrono::steady_clock::time_point epoch, Clock::duration interval, Clock::duration phase) {
    stop();
    stop_ = false;
    thread_ = std::thread([this, epoch, interval, phase] {
      for (std::int64_t k = 0;; ++k) {
        {
          std::unique_lock lk(run_mu_);
          if (run_cv_.wait_until(lk, epoch + phase + k * interval, [&] { return stop_; })) return;
        }
        if (!paused_) refresh_once();
      }
    });
  }

  void stop() {
    {
      std::lock_guard lk(run_mu_);
      stop_ = true;
    }
    run_cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  void pause() { paused_ = true; }
  void resume() { paused_ = false; }
  std::uint64_t refreshes() const { return refreshes_; }
  std::uint64_t failures() const { return failures_; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  Fetch fetch_;
  const Clock& clock_;
  std::vector<std::string> ids_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Entry> entries_;
  std::atomic<std::uint64_t> refreshes_{0};
  std::atomic<std::uint64_t> failures_{0};
  std::atomic<bool> paused_{false};
  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool stop_ = false;
  std::thread thread_;
};

using HostCache = SnapshotCache<HostSnapshot>;
using OssCache = SnapshotCache<OssSnapshot>;

// Host and OSS ids a testbed's caches serve.
std::vector<std::string> host_ids(const TestbedSpec& tb);
std::vector<std::string> oss_ids(const TestbedSpec& tb);

template <class T>
struct Fetched {
  std::shared_ptr<const T> snapshot;
  bool stale = true;
};

// What an agent reads layer data through.
class SnapshotSource {
 public:
  virtual ~SnapshotSource() = default;
  virtual Fetched<HostSnapshot> host(const std::string& host_id) = 0;
  virtual Fetched<OssSnapshot> oss(const std::string& oss_id) = 0;
};

// Reads cache entries; an entry older than `stale_after` intervals is stale.
class CachedSource final : public SnapshotSource {
 public:
  CachedSource(const HostCache& hosts, const OssCache& oss, const Clock& clock, Clock::duration interval,
               double stale_after = 2.0);
  Fetched<HostSnapshot> host(const std::string& host_id) override;
  Fetched<OssSnapshot> oss(const std::string& oss_id) override;

 private:
  template <class T>
  Fetched<T> read(const SnapshotCache<T>& cache, const std::string& id) const;

  const HostCache& hosts_;
  const OssCache& oss_;
  const Clock& clock_;
  Clock::duration max_age_;
};

// No caches: every read goes upstream and pays its cost.
class DirectSource final : public SnapshotSource {
 public:
  explicit DirectSource(Upstream& upstream) : upstream_(upstream) {}
  Fetched<HostSnapshot> host(const std::string& host_id) override;
  Fetched<OssSnapshot> oss(const std::string& oss_id) override;

 private:
  Upstream& upstream_;
};

enum class PublishResult : std::uint8_t {
  Acked,    // delivered synchronously
  Queued,   // waiting for the transmitter
  Dropped,  // queue was full; the oldest queued envelope was discarded to make room
};

// Bounded FIFO of encoded envelopes with drop-oldest overflow. push never blocks.
class PublisherQueue {
 public:
  explicit PublisherQueue(std::size_t capacity = 10000);
  PublishResult push(std::vector<std::uint8_t> payload);
  // Waits up to `wait` for at least one item, then takes up to `max`.
  std::size_t pop_batch(std::vector<std::vector<std::uint8_t>>& out, std::size_t max, std::chrono::milliseconds wait);
  void close();
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<std::uint8_t>> items_;
  std::atomic<std::uint64_t> dropped_{0};
  bool closed_ = false;
};

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  // Sends already-framed bytes. Throws on failure.
  virtual void send(std::span<const std::uint8_t> frames) = 0;
};

// Framed TCP stream to a collector; reconnects lazily after a failure.
class TcpFrameSink final : public FrameSink {
 public:
  explicit TcpFrameSink(Endpoint ep) : ep_(std::move(ep)) {}
  void send(std::span<const std::uint8_t> frames) override;

 private:
  Endpoint ep_;
  Socket sock_;
};

struct PublisherStats {
  std::uint64_t published = 0;  // accepted by publish()
  std::uint64_t sent = 0;
  std::uint64_t dropped = 0;
  std::uint64_t send_failures = 0;
  std::size_t queued = 0;
};

// One publisher per host. In asynchronous mode a transmitter thread drains the
// queue in batches and retries failed sends; collection never waits on it.
class Publisher {
 public:
  Publisher(std::unique_ptr<FrameSink> sink, std::size_t capacity = 10000, bool synchronous = false);
  ~Publisher();
  Publisher(const Publisher&) = delete;
  Publisher& operator=(const Publisher&) = delete;

  PublishResult publish(const MetricEnvelope& env);
  void start();
  // Stops the transmitter; with `drain`, first waits up to `timeout` for the queue to empty.
  void stop(bool drain = true, std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  PublisherStats stats() const;

 private:
  void transmit_loop();

  std::unique_ptr<FrameSink> sink_;
  PublisherQueue queue_;
  bool synchronous_;
  std::mutex sync_mu_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> published_{0};
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> sync_dropped_{0};
  std::atomic<std::uint64_t> failures_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::thread thread_;
};

struct TickStats {
  std::int64_t tick = 0;
  std::size_t active = 0;
  std::size_t published = 0;
  std::size_t gaps = 0;
  std::size_t dropped = 0;
  std::size_t duplicates_skipped = 0;
  std::size_t opened = 0;
  std::size_t closed = 0;
  double collect_seconds = 0;
};

// Agent of one sender DTN. It reads its own host snapshot to discover
// transfers and follows each transfer's peer host and OSTs for the rest.
class Agent {
 public:
  Agent(TestbedSpec tb, int dtn, SnapshotSource& source, Profile profile);

  const std::string& host() const { return host_id_; }
  Profile profile() const { return profile_; }

  // Transfers present in the latest host snapshot (possibly stale).
  std::vector<std::string> discover_transfers();

  // Assembles the envelope for the transfer, or a gap marker stamped `tick`
  // when any needed snapshot is stale or missing.
  MetricEnvelope collect(const std::string& transfer_id, std::int64_t tick);

  // Discovers, collects and publishes every active transfer once. An envelope
  // whose (transfer_id, t) was already published is skipped.
  TickStats tick(std::int64_t tick, Publisher& publisher);

  std::uint64_t published_total() const { return published_total_; }
  std::uint64_t gaps_total() const { return gaps_total_; }

 private:
  TestbedSpec tb_;
  int dtn_;
  std::string host_id_;
  SnapshotSource& source_;
  Profile profile_;
  std::map<std::string, std::int64_t> last_t_;
  std::uint64_t published_total_ = 0;
  std::uint64_t gaps_total_ = 0;
};

}  // namespace xfermon
