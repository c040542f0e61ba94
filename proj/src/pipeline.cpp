#include "xfermon/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "xfermon/codec.hpp"
#include "xfermon/error.hpp"

namespace xfermon {
namespace {

class DiscardSink final : public FrameSink {
 public:
  void send(std::span<const std::uint8_t>) override {}
};

std::string job_suffix(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

}  // namespace

void CollectorSink::send(std::span<const std::uint8_t> frames) {
  std::size_t off = 0;
  while (off < frames.size()) {
    if (frames.size() - off < kFrameHeader) throw DataError("truncated frame header");
    const auto n = read_frame_length(frames.subspan(off).first<kFrameHeader>());
    off += kFrameHeader;
    if (n > kMaxFrame || frames.size() - off < n) throw DataError("truncated frame");
    collector_.submit_payload(frames.subspan(off, n));
    off += n;
  }
}

LockstepReport run_lockstep(const SimRun& run, Publisher& publisher, Profile profile, bool use_cache,
                            const std::function<void(const StepOutput&)>& on_step) {
  const TestbedSpec& tb = run.testbed;
  Simulator sim(run);
  World world;
  Upstream up(world, UpstreamCosts{std::chrono::microseconds(0), std::chrono::microseconds(0)});
  ManualClock clock;
  HostCache hosts([&](const std::string& id) { return up.fetch_host(id); }, clock, host_ids(tb));
  OssCache oss([&](const std::string& id) { return up.fetch_oss(id); }, clock, oss_ids(tb));
  CachedSource cached(hosts, oss, clock, std::chrono::seconds(1));
  DirectSource direct(up);
  SnapshotSource& source = use_cache ? static_cast<SnapshotSource&>(cached) : direct;

  std::vector<Agent> agents;
  for (int dtn = 0; dtn < tb.client_count_per_side; ++dtn) agents.emplace_back(tb, dtn, source, profile);

  LockstepReport rep;
  while (!sim.finished()) {
    auto out = std::make_shared<const StepOutput>(sim.step());
    world.publish(out);
    if (on_step) on_step(*out);
    clock.advance(std::chrono::seconds(1));
    if (use_cache) {
      hosts.refresh_once();
      oss.refresh_once();
    }
    for (auto& a : agents) {
      const auto st = a.tick(out->t, publisher);
      rep.published += st.published;
      rep.gaps += st.gaps;
    }
    ++rep.steps;
  }
  rep.host_fetches = up.host_fetches();
  rep.oss_fetches = up.oss_fetches();
  return rep;
}

SimRun ramp_run(const RealtimeOptions& opts) {
  const TestbedSpec& tb = opts.testbed;
  tb.validate();
  if (opts.ticks < 1) throw DomainError("ticks must be positive");
  auto stages = opts.ramp;
  std::sort(stages.begin(), stages.end(), [](const auto& a, const auto& b) { return a.at_tick < b.at_tick; });
  SimRun run;
  run.testbed = tb;
  run.seed = opts.seed;
  run.options = opts.sim;
  run.duration_s = opts.ticks + 1;
  int have = 0;
  for (const auto& s : stages) {
    if (s.transfers < have) throw DomainError("ramp stages must not shrink");
    for (; have < s.transfers; ++have) {
      TransferJob j;
      j.transfer_id = tb.id + "-ramp-" + job_suffix(have);
      j.file_count = 1000000;
      j.file_size_bytes = 3.0 * 1024 * 1024 * 1024;
      j.source_ost_index = have % tb.oss_count_per_side;
      j.dest_ost_index = (have / tb.oss_count_per_side) % tb.oss_count_per_side;
      j.dtn_index = have % tb.client_count_per_side;
      j.start_s = s.at_tick;
      run.jobs.push_back(std::move(j));
    }
  }
  return run;
}

RealtimeReport run_realtime(const RealtimeOptions& opts) {
  using namespace std::chrono;
  const SimRun run = ramp_run(opts);
  const TestbedSpec& tb = run.testbed;
  const auto interval = duration_cast<Clock::duration>(opts.interval);

  Simulator sim(run);
  World world;
  Upstream up(world, opts.costs);
  SteadyClock clock;
  HostCache hosts([&](const std::string& id) { return up.fetch_host(id); }, clock, host_ids(tb));
  OssCache oss([&](const std::string& id) { return up.fetch_oss(id); }, clock, oss_ids(tb));
  CachedSource cached(hosts, oss, clock, interval);
  DirectSource direct(up);
  SnapshotSource& source = opts.use_cache ? static_cast<SnapshotSource&>(cached) : direct;

  std::vector<Agent> agents;
  std::vector<std::unique_ptr<Publisher>> pubs;
  for (int dtn = 0; dtn < tb.client_count_per_side; ++dtn) {
    agents.emplace_back(tb, dtn, source, opts.profile);
    auto sink = opts.make_sink ? opts.make_sink() : std::make_unique<DiscardSink>();
    pubs.push_back(std::make_unique<Publisher>(std::move(sink), opts.queue_capacity));
    pubs.back()->start();
  }

  const auto epoch = steady_clock::now() + milliseconds(50);
  std::thread simulator([&] {
    for (std::int64_t k = 0; k < opts.ticks && !sim.finished(); ++k) {
      std::this_thread::sleep_until(epoch + k * opts.interval);
      world.publish(std::make_shared<const StepOutput>(sim.step()));
    }
  });
  if (opts.use_cache) {
    hosts.start(epoch, interval, interval / 4);
    oss.start(epoch, interval, interval / 4);
  }

  RealtimeReport rep;
  for (std::int64_t k = 0; k < opts.ticks; ++k) {
    std::this_thread::sleep_until(epoch + k * opts.interval + opts.interval / 2);
    TickReport tr;
    tr.tick = k;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto st = agents[i].tick(k, *pubs[i]);
      tr.active += st.active;
      tr.published += st.published;
      tr.gaps += st.gaps;
      tr.dropped += st.dropped;
      tr.collect_seconds = std::max(tr.collect_seconds, st.collect_seconds);
    }
    rep.ticks.push_back(tr);
    if (opts.on_tick) opts.on_tick(tr);
  }
  simulator.join();
  hosts.stop();
  oss.stop();
  for (auto& p : pubs) {
    p->stop(true);
    const auto s = p->stats();
    rep.publisher.published += s.published;
    rep.publisher.sent += s.sent;
    rep.publisher.dropped += s.dropped;
    rep.publisher.send_failures += s.send_failures;
    rep.publisher.queued += s.queued;
  }
  rep.host_fetches = up.host_fetches();
  rep.oss_fetches = up.oss_fetches();
  return rep;
}

std::string stats_text(const IngestStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "msgs_per_s %.1f\nqueue_depth %zu\npersisted_total %llu\nreject_total %llu\n"
                "duplicate_total %llu\nreceived_total %llu\n",
                s.msgs_per_s, s.queue_depth, static_cast<unsigned long long>(s.persisted_total),
                static_cast<unsigned long long>(s.reject_total), static_cast<unsigned long long>(s.duplicate_total),
                static_cast<unsigned long long>(s.received_total));
  return buf;
}

}  // namespace xfermon
