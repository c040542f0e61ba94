#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xfermon/tcp_model.hpp"

namespace xfermon {

struct FlowDemand {
  std::vector<std::size_t> resources;  // indices into the capacity vector
  double cap = kUnbounded;             // the flow's own rate limit
};

// Max-min fair allocation by progressive filling: all unfrozen flows grow at
// the same rate; a flow freezes when it reaches its cap or when any resource
// on its route saturates. Throws DomainError for a flow with no resources and
// no cap, or for a negative capacity.
std::vector<double> max_min_fair(std::span<const double> capacities, std::span<const FlowDemand> flows);

}  // namespace xfermon
