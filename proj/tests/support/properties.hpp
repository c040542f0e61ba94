#pragma once

// Property checks shared by the unit tests and the acceptance binary. Each
// returns ok=false with a short description of the first counterexample.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xfermon/diagnose.hpp"
#include "xfermon/metrics.hpp"
#include "xfermon/sim.hpp"

namespace xfermon::props {

struct PropertyResult {
  bool ok = true;
  std::string detail;
  std::size_t cases = 0;
};

// A valid envelope with random ids (ASCII and multi-byte UTF-8, up to 64
// bytes) and values spread over many orders of magnitude.
MetricEnvelope random_envelope(std::mt19937_64& rng, Profile profile);

// encode -> decode is the identity, validate() is clean and the payload fits
// its profile budget, for `n` random envelopes of both profiles.
PropertyResult envelope_roundtrip(std::size_t n, std::uint64_t seed);

// A small random run: 1-5 jobs, up to two anomalies, up to two competitor
// loads, 3-8 seconds.
SimRun random_sim_run(std::mt19937_64& rng);

// Capacity and conservation invariants over every step of `n` random runs.
PropertyResult sim_invariants(std::size_t n, std::uint64_t seed);

// Multiplying every byte-rate metric of the rows and the baseline by a power
// of two leaves every diagnosis and every normalized value unchanged, and
// repeated classification is identical.
PropertyResult classifier_scale_invariance(std::uint64_t seed);

// score() against per-class counting over expanded sequences for `n` random
// confusion matrices.
PropertyResult f1_matches_counting_oracle(std::size_t n, std::uint64_t seed);

// Hard-kills a child process mid-ingest, then checks that every complete
// segment line is a valid record, that only a torn tail can follow it, and
// that the store reopens with exactly the complete records.
PropertyResult crash_restart_prefix(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace xfermon::props
