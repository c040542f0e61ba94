#include "xfermon/tcp_model.hpp"

#include <algorithm>
#include <cmath>

#include "xfermon/error.hpp"

namespace xfermon {

double mathis_rate(double mss_bytes, double rtt_us, double loss_p, double capacity) {
  if (!(loss_p > 0.0 && loss_p < 1.0)) throw DomainError("loss probability must be in (0, 1)");
  if (!(mss_bytes > 0.0) || !(rtt_us > 0.0)) throw DomainError("mss and rtt must be positive");
  const double rtt_s = rtt_us * 1e-6;
  return std::min(capacity, mss_bytes / rtt_s * kMathisConstant / std::sqrt(loss_p));
}

double window_limited_rate(double send_buf_bytes, double recv_buf_bytes, double rtt_us, double capacity) {
  return buffer_limited_rate(std::min(send_buf_bytes, recv_buf_bytes), rtt_us, capacity);
}

double buffer_limited_rate(double tcp_buf_bytes, double rtt_us, double capacity) {
  if (!(tcp_buf_bytes > 0.0) || !(rtt_us > 0.0)) throw DomainError("buffer and rtt must be positive");
  return std::min(capacity, tcp_buf_bytes / (rtt_us * 1e-6));
}

double bdp_bytes(double bandwidth_bytes_per_s, double rtt_us) { return bandwidth_bytes_per_s * rtt_us * 1e-6; }

}  // namespace xfermon
