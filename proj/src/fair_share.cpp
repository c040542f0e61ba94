#include "xfermon/fair_share.hpp"

#include <algorithm>
#include <cmath>

#include "xfermon/error.hpp"

namespace xfermon {

std::vector<double> max_min_fair(std::span<const double> capacities, std::span<const FlowDemand> flows) {
  for (double c : capacities)
    if (!(c >= 0.0)) throw DomainError("resource capacity must be non-negative");

  const std::size_t nf = flows.size();
  std::vector<double> alloc(nf, 0.0);
  std::vector<bool> frozen(nf, false);
  std::vector<double> remaining(capacities.begin(), capacities.end());

  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t r : flows[f].resources)
      if (r >= capacities.size()) throw DomainError("flow references unknown resource");
    if (flows[f].resources.empty() && std::isinf(flows[f].cap)) throw DomainError("unbounded flow");
    if (flows[f].cap <= 0.0) frozen[f] = true;
  }

  std::vector<std::size_t> users(capacities.size());
  for (;;) {
    std::fill(users.begin(), users.end(), 0);
    std::size_t active = 0;
    for (std::size_t f = 0; f < nf; ++f) {
      if (frozen[f]) continue;
      ++active;
      for (std::size_t r : flows[f].resources) ++users[r];
    }
    if (active == 0) break;

    double step = kUnbounded;
    for (std::size_t r = 0; r < remaining.size(); ++r)
      if (users[r] > 0) step = std::min(step, remaining[r] / static_cast<double>(users[r]));
    for (std::size_t f = 0; f < nf; ++f)
      if (!frozen[f]) step = std::min(step, flows[f].cap - alloc[f]);
    step = std::max(step, 0.0);

    for (std::size_t f = 0; f < nf; ++f) {
      if (frozen[f]) continue;
      alloc[f] += step;
      for (std::size_t r : flows[f].resources) remaining[r] -= step;
    }

    // Freeze flows at their cap or crossing a saturated resource.
    for (std::size_t f = 0; f < nf; ++f) {
      if (frozen[f]) continue;
      if (alloc[f] >= flows[f].cap * (1 - 1e-12)) {
        alloc[f] = std::min(alloc[f], flows[f].cap);
        frozen[f] = true;
        continue;
      }
      for (std::size_t r : flows[f].resources) {
        if (remaining[r] <= capacities[r] * 1e-12) {
          frozen[f] = true;
          break;
        }
      }
    }
  }
  return alloc;
}

}  // namespace xfermon
