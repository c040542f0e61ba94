#pragma once

// End-to-end wiring: simulator -> upstream -> caches -> agents -> publisher
// -> collector, either in lockstep (deterministic, no wall clock) or in real
// time with the collection interval driven by the steady clock.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xfermon/agent.hpp"
#include "xfermon/collector.hpp"
#include "xfermon/sim.hpp"

namespace xfermon {

// Hands frames straight to an in-process collector.
class CollectorSink final : public FrameSink {
 public:
  explicit CollectorSink(Collector& collector) : collector_(collector) {}
  void send(std::span<const std::uint8_t> frames) override;

 private:
  Collector& collector_;
};

struct LockstepReport {
  std::int64_t steps = 0;
  std::uint64_t published = 0;
  std::uint64_t gaps = 0;
  std::uint64_t host_fetches = 0;
  std::uint64_t oss_fetches = 0;
};

// Runs the simulation one second at a time on a manual clock. Each second:
// step the simulator, refresh the caches once (or read upstream directly when
// `use_cache` is false), then tick every sender DTN's agent.
LockstepReport run_lockstep(const SimRun& run, Publisher& publisher, Profile profile, bool use_cache = true,
                            const std::function<void(const StepOutput&)>& on_step = {});

struct TickReport {
  std::int64_t tick = 0;
  std::size_t active = 0;
  std::size_t published = 0;
  std::size_t gaps = 0;
  std::size_t dropped = 0;
  double collect_seconds = 0;  // slowest agent
};

struct RampStage {
  std::int64_t at_tick = 0;
  int transfers = 0;  // concurrent transfers from this tick on
};

struct RealtimeOptions {
  TestbedSpec testbed;
  SimOptions sim;
  std::uint64_t seed = 1;
  std::chrono::milliseconds interval{1000};
  std::int64_t ticks = 10;
  std::vector<RampStage> ramp{{0, 1}};
  Profile profile = Profile::Minimal14;
  bool use_cache = true;
  UpstreamCosts costs;
  std::size_t queue_capacity = 10000;
  // One sink per agent; defaults to nothing (frames are discarded).
  std::function<std::unique_ptr<FrameSink>()> make_sink;
  std::function<void(const TickReport&)> on_tick;
};

struct RealtimeReport {
  std::vector<TickReport> ticks;
  PublisherStats publisher;
  std::uint64_t host_fetches = 0;
  std::uint64_t oss_fetches = 0;
};

// Transfers never finish within a ramp run; each stage adds jobs round-robin
// over DTNs and OSTs.
SimRun ramp_run(const RealtimeOptions& opts);

RealtimeReport run_realtime(const RealtimeOptions& opts);

std::string stats_text(const IngestStats& s);

}  // namespace xfermon
