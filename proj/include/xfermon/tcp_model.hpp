#pragma once

#include <limits>

namespace xfermon {

inline constexpr double kMathisConstant = 1.22;
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// Loss-limited steady-state rate of one TCP connection, (mss / rtt) * C / sqrt(p),
// capped at `capacity`. Throws DomainError unless 0 < loss_p < 1 and mss, rtt > 0.
double mathis_rate(double mss_bytes, double rtt_us, double loss_p, double capacity = kUnbounded);

// Window-limited rate of one connection whose effective window is the
// smaller of the two endpoint buffers.
double window_limited_rate(double send_buf_bytes, double recv_buf_bytes, double rtt_us,
                           double capacity = kUnbounded);
double buffer_limited_rate(double tcp_buf_bytes, double rtt_us, double capacity = kUnbounded);

double bdp_bytes(double bandwidth_bytes_per_s, double rtt_us);

}  // namespace xfermon
