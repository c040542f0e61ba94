#include "xfermon/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "xfermon/error.hpp"
#include "xfermon/fair_share.hpp"
#include "xfermon/tcp_model.hpp"

namespace xfermon {
namespace {

constexpr double kGbps = 125e6;
constexpr double kMiB = 1024.0 * 1024.0;
constexpr double kGiB = 1024.0 * kMiB;
constexpr double kLustreRpcBytes = 4 * kMiB;
constexpr double kIoSizeBytes = 1 * kMiB;
constexpr double kAckBytes = 66;

TestbedSpec make_testbed(std::string id, double read_gbps, double write_gbps, double wan_gbps, double rtt_ms,
                         double lnet_gbps, double mss, int streams) {
  TestbedSpec tb;
  tb.id = std::move(id);
  tb.per_ost_disk_read_bytes_per_s = read_gbps * kGbps;
  tb.per_ost_disk_write_bytes_per_s = write_gbps * kGbps;
  tb.wan_bandwidth_bytes_per_s = wan_gbps * kGbps;
  tb.rtt_us = rtt_ms * 1000.0;
  tb.lnet_nic_bytes_per_s = lnet_gbps * kGbps;
  tb.mss_bytes = mss;
  tb.parallel_streams = streams;
  tb.oss_count_per_side = 3;
  tb.client_count_per_side = 1;
  tb.default_tcp_buf_max_bytes = 2.0 * tb.bdp_bytes();
  return tb;
}

bool is_competitor_class(AnomalyClass c) {
  switch (c) {
    case AnomalyClass::ReceiverOstWriteCongestion:
    case AnomalyClass::ReceiverClientWriteCongestion:
    case AnomalyClass::SenderOstReadCongestion:
    case AnomalyClass::SenderClientReadCongestion:
    case AnomalyClass::NetworkCongestion:
      return true;
    default:
      return false;
  }
}

LoadKind load_kind(AnomalyClass c) {
  switch (c) {
    case AnomalyClass::SenderOstReadCongestion: return LoadKind::OstRead;
    case AnomalyClass::ReceiverOstWriteCongestion: return LoadKind::OstWrite;
    case AnomalyClass::SenderClientReadCongestion: return LoadKind::DtnRead;
    case AnomalyClass::ReceiverClientWriteCongestion: return LoadKind::DtnWrite;
    default: return LoadKind::Wan;
  }
}

bool in_menu(double v, std::span<const double> menu) {
  return std::any_of(menu.begin(), menu.end(), [v](double m) { return std::abs(v - m) <= 1e-12 * std::abs(m); });
}

bool active_at(std::int64_t start, std::int64_t end, std::int64_t t) { return start <= t && t < end; }

double clamp_pct(double v) { return std::clamp(v, 0.0, 100.0); }

// Layout of the resource vector shared by transfers and competitor loads.
struct Resources {
  int oss;
  int dtn;
  std::size_t s_ost(int i) const { return static_cast<std::size_t>(i); }
  std::size_t r_ost(int i) const { return static_cast<std::size_t>(oss + i); }
  std::size_t s_lnet(int h) const { return static_cast<std::size_t>(2 * oss + h); }
  std::size_t r_lnet(int h) const { return static_cast<std::size_t>(2 * oss + dtn + h); }
  std::size_t s_wan(int h) const { return static_cast<std::size_t>(2 * oss + 2 * dtn + h); }
  std::size_t r_wan(int h) const { return static_cast<std::size_t>(2 * oss + 3 * dtn + h); }
  std::size_t wan() const { return static_cast<std::size_t>(2 * oss + 4 * dtn); }
  std::size_t size() const { return wan() + 1; }
};

}  // namespace

double TestbedSpec::bdp_bytes() const { return xfermon::bdp_bytes(wan_bandwidth_bytes_per_s, rtt_us); }

void TestbedSpec::validate() const {
  if (id.empty() || id.size() > kMaxIdLength) throw DomainError("testbed id must be 1-64 bytes");
  if (!(wan_bandwidth_bytes_per_s > 0) || !(rtt_us > 0) || !(per_ost_disk_read_bytes_per_s > 0) ||
      !(per_ost_disk_write_bytes_per_s > 0) || !(lnet_nic_bytes_per_s > 0) || !(mss_bytes > 0))
    throw DomainError("testbed " + id + ": rates must be strictly positive");
  if (oss_count_per_side < 2) throw DomainError("testbed " + id + ": need at least 2 OSS per side");
  if (client_count_per_side < 1) throw DomainError("testbed " + id + ": need at least 1 client per side");
  if (parallel_streams < 1) throw DomainError("testbed " + id + ": need at least one stream");
  if (default_tcp_buf_max_bytes < bdp_bytes()) throw DomainError("testbed " + id + ": default buffer below BDP");
}

const std::vector<TestbedSpec>& builtin_testbeds() {
  static const std::vector<TestbedSpec> tbs = {
      make_testbed("tb1", 3.6, 3.4, 10, 10, 6, 8948, 10),
      make_testbed("tb2", 1.0, 0.9, 10, 1.5, 2, 1460, 1),
      make_testbed("tb3", 1.5, 1.4, 10, 30, 2.5, 8948, 13),
      make_testbed("tb4", 6.0, 5.5, 25, 20, 10, 8948, 32),
      make_testbed("tb5", 12.0, 11.0, 40, 5, 20, 8948, 16),
      make_testbed("tb6", 8.0, 7.5, 100, 60, 12, 8948, 64),
      make_testbed("tb7", 2.0, 1.8, 10, 45, 3.2, 8948, 24),
      make_testbed("tb8", 10.0, 9.5, 100, 15, 16, 8948, 44),
  };
  return tbs;
}

const TestbedSpec& builtin_testbed(std::string_view id) {
  for (const auto& tb : builtin_testbeds())
    if (tb.id == id) return tb;
  throw NotFound("unknown testbed " + std::string(id));
}

std::vector<double> severity_menu(AnomalyClass cls, const TestbedSpec& tb) {
  switch (cls) {
    case AnomalyClass::Normal: return {};
    case AnomalyClass::NetworkLoss:
    case AnomalyClass::Corrupt: return {kLossMenu.begin(), kLossMenu.end()};
    case AnomalyClass::Reorder:
    case AnomalyClass::Duplicate: return {kReorderMenu.begin(), kReorderMenu.end()};
    case AnomalyClass::Jitter: return {kJitterMenuUs.begin(), kJitterMenuUs.end()};
    case AnomalyClass::SenderTcpBufferMisconfig:
    case AnomalyClass::ReceiverTcpBufferMisconfig: {
      const double normal = steady_throughput(tb, std::nullopt);
      std::vector<double> out;
      for (auto it = kBufferFractionMenu.rbegin(); it != kBufferFractionMenu.rend(); ++it)
        out.push_back(*it * normal * tb.rtt_us * 1e-6 / tb.parallel_streams);
      return out;
    }
    default: return {kCompetitorGrid.begin(), kCompetitorGrid.end()};
  }
}

void validate(const AnomalySpec& spec, const TestbedSpec& tb) {
  if (spec.start_s >= spec.end_s) throw DomainError("anomaly interval is empty");
  if (spec.target < 0) throw DomainError("anomaly target must be non-negative");
  const double s = spec.severity;
  switch (spec.cls) {
    case AnomalyClass::Normal: throw DomainError("Normal is not an injectable anomaly");
    case AnomalyClass::NetworkLoss:
    case AnomalyClass::Corrupt:
      if (!in_menu(s, kLossMenu)) throw DomainError("loss/corrupt rate not in menu");
      break;
    case AnomalyClass::Reorder:
    case AnomalyClass::Duplicate:
      if (!in_menu(s, kReorderMenu)) throw DomainError("reorder/duplicate rate not in menu");
      break;
    case AnomalyClass::Jitter:
      if (!in_menu(s, kJitterMenuUs)) throw DomainError("jitter stddev not in menu");
      break;
    case AnomalyClass::SenderTcpBufferMisconfig:
    case AnomalyClass::ReceiverTcpBufferMisconfig:
      if (!(s > 0)) throw DomainError("buffer size must be positive");
      if (spec.target >= tb.client_count_per_side) throw DomainError("buffer anomaly targets unknown DTN");
      break;
    default:
      if (!(s >= 1) || s != std::floor(s)) throw DomainError("competitor count must be an integer >= 1");
      if (spec.cls == AnomalyClass::SenderOstReadCongestion || spec.cls == AnomalyClass::ReceiverOstWriteCongestion) {
        if (spec.target >= tb.oss_count_per_side) throw DomainError("I/O anomaly targets unknown OST");
      } else if (spec.cls != AnomalyClass::NetworkCongestion && spec.target >= tb.client_count_per_side) {
        throw DomainError("client anomaly targets unknown DTN");
      }
      break;
  }
}

std::string host_id(const TestbedSpec& tb, Side side, int dtn) {
  return tb.id + (side == Side::Sender ? "-s-dtn" : "-r-dtn") + std::to_string(dtn);
}

std::string oss_id(const TestbedSpec& tb, Side side, int ost) {
  return tb.id + (side == Side::Sender ? "-s-oss" : "-r-oss") + std::to_string(ost);
}

Simulator::Simulator(SimRun run) : run_(std::move(run)) {
  run_.testbed.validate();
  if (run_.duration_s < 0) throw DomainError("duration must be non-negative");
  std::set<std::string> ids;
  for (const auto& j : run_.jobs) {
    if (j.file_count < 1 || !(j.file_size_bytes >= 1)) throw DomainError("job needs >= 1 file of >= 1 byte");
    if (j.source_ost_index < 0 || j.source_ost_index >= run_.testbed.oss_count_per_side ||
        j.dest_ost_index < 0 || j.dest_ost_index >= run_.testbed.oss_count_per_side)
      throw DomainError("job references unknown OST");
    if (j.dtn_index < 0 || j.dtn_index >= run_.testbed.client_count_per_side)
      throw DomainError("job references unknown DTN");
    if (j.transfer_id.empty() || j.transfer_id.size() > kMaxIdLength) throw DomainError("bad transfer id");
    if (!ids.insert(j.transfer_id).second) throw DomainError("duplicate transfer id " + j.transfer_id);
    const double total = static_cast<double>(j.file_count) * j.file_size_bytes;
    jobs_.push_back({j, total, 0.0});
  }
  for (const auto& l : run_.competitors)
    if (l.count < 1 || l.start_s >= l.end_s) throw DomainError("bad background load");

  std::seed_seq cap_seq{static_cast<std::uint32_t>(run_.seed), static_cast<std::uint32_t>(run_.seed >> 32), 1u};
  std::seed_seq ctr_seq{static_cast<std::uint32_t>(run_.seed), static_cast<std::uint32_t>(run_.seed >> 32), 2u};
  capacity_rng_.seed(cap_seq);
  counter_rng_.seed(ctr_seq);

  auto anomalies = std::move(run_.anomalies);
  run_.anomalies.clear();
  for (const auto& a : anomalies) inject(a);
}

void Simulator::inject(const AnomalySpec& spec) {
  validate(spec, run_.testbed);
  for (const auto& a : run_.anomalies) {
    if (a.cls == spec.cls && a.target == spec.target && a.start_s < spec.end_s && spec.start_s < a.end_s)
      throw DomainError("overlapping " + std::string(to_string(spec.cls)) + " anomalies on the same resource");
  }
  run_.anomalies.push_back(spec);
}

double Simulator::bytes_done(std::string_view transfer_id) const {
  for (const auto& j : jobs_)
    if (j.job.transfer_id == transfer_id) return j.done;
  throw NotFound("unknown transfer " + std::string(transfer_id));
}

StepOutput Simulator::step() {
  const TestbedSpec& tb = run_.testbed;
  const SimOptions& o = run_.options;
  const std::int64_t t = t_;
  const int oss = tb.oss_count_per_side;
  const int dtn = tb.client_count_per_side;
  const Resources res{oss, dtn};

  // Anomaly effects in force this second.
  double loss_p = 0, jitter_us = 0, reorder_p = 0, dup_p = 0;
  std::vector<double> send_buf(static_cast<std::size_t>(dtn), tb.default_tcp_buf_max_bytes);
  std::vector<double> recv_buf(static_cast<std::size_t>(dtn), tb.default_tcp_buf_max_bytes);
  std::vector<BackgroundLoad> loads;
  for (const auto& l : run_.competitors)
    if (active_at(l.start_s, l.end_s, t)) loads.push_back(l);
  for (const auto& a : run_.anomalies) {
    if (!active_at(a.start_s, a.end_s, t)) continue;
    switch (a.cls) {
      case AnomalyClass::NetworkLoss:
      case AnomalyClass::Corrupt: loss_p += a.severity; break;
      case AnomalyClass::Jitter: jitter_us = std::max(jitter_us, a.severity); break;
      case AnomalyClass::Reorder: reorder_p += a.severity; break;
      case AnomalyClass::Duplicate: dup_p += a.severity; break;
      case AnomalyClass::SenderTcpBufferMisconfig:
        send_buf[static_cast<std::size_t>(a.target)] = std::min(send_buf[static_cast<std::size_t>(a.target)], a.severity);
        break;
      case AnomalyClass::ReceiverTcpBufferMisconfig:
        recv_buf[static_cast<std::size_t>(a.target)] = std::min(recv_buf[static_cast<std::size_t>(a.target)], a.severity);
        break;
      default:
        if (is_competitor_class(a.cls))
          loads.push_back({load_kind(a.cls), a.target, static_cast<int>(a.severity), a.start_s, a.end_s});
        break;
    }
  }
  const bool congested = std::any_of(loads.begin(), loads.end(), [](const auto& l) { return l.kind == LoadKind::Wan; });
  double corrupt_p = 0;
  for (const auto& a : run_.anomalies)
    if (a.cls == AnomalyClass::Corrupt && active_at(a.start_s, a.end_s, t)) corrupt_p += a.severity;

  // Capacities with per-second efficiency noise. Draws happen in a fixed
  // order so that runs differing only in severity share the same noise.
  std::vector<double> cap(res.size());
  for (int i = 0; i < oss; ++i) {
    cap[res.s_ost(i)] = tb.per_ost_disk_read_bytes_per_s;
    cap[res.r_ost(i)] = tb.per_ost_disk_write_bytes_per_s;
  }
  for (int h = 0; h < dtn; ++h) {
    cap[res.s_lnet(h)] = cap[res.r_lnet(h)] = tb.lnet_nic_bytes_per_s;
    cap[res.s_wan(h)] = cap[res.r_wan(h)] = tb.wan_bandwidth_bytes_per_s;
  }
  cap[res.wan()] = tb.wan_bandwidth_bytes_per_s;
  if (o.noise) {
    std::uniform_real_distribution<double> eff(o.capacity_efficiency_min, 1.0);
    for (double& c : cap) c *= eff(capacity_rng_);
  }

  // Transfer flow parameters.
  const double rtt_eff = tb.rtt_us * (congested ? o.congestion_rtt_factor : 1.0);
  const double jitter_eq = o.jitter_loss_coefficient * std::min(1.0, jitter_us / tb.rtt_us);
  const double p_total = std::min(0.5, loss_p + jitter_eq);
  const double retx_ratio = std::min(0.5, o.background_retransmit_ratio +
                                              (congested ? o.congestion_retransmit_ratio : 0.0) +
                                              o.retransmit_amplification * p_total + 0.002 * reorder_p);
  const double efficiency = (1.0 - retx_ratio) * (1.0 - 0.1 * std::min(1.0, reorder_p)) *
                            (1.0 - 0.02 * std::min(1.0, dup_p));
  const double streams = tb.parallel_streams;

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < jobs_.size(); ++j)
    if (jobs_[j].job.start_s <= t && jobs_[j].remaining > 0) active.push_back(j);

  std::vector<FlowDemand> flows;
  for (std::size_t j : active) {
    const auto& job = jobs_[j].job;
    const int h = job.dtn_index;
    const auto hs = static_cast<std::size_t>(h);
    double wire_cap = streams * window_limited_rate(send_buf[hs], recv_buf[hs], rtt_eff);
    if (p_total > 0) wire_cap = std::min(wire_cap, streams * mathis_rate(tb.mss_bytes, rtt_eff, p_total));
    wire_cap = std::min(wire_cap, jobs_[j].remaining / efficiency);
    flows.push_back({{res.s_ost(job.source_ost_index), res.s_lnet(h), res.s_wan(h), res.wan(), res.r_wan(h),
                      res.r_lnet(h), res.r_ost(job.dest_ost_index)},
                     wire_cap});
  }
  const std::size_t n_transfer_flows = flows.size();

  // Competitor flows; remember which resource-bound bucket each belongs to.
  struct LoadFlow {
    LoadKind kind;
    int target;
    int ost;
  };
  std::vector<LoadFlow> load_flows;
  for (const auto& l : loads) {
    std::vector<int> others;
    if (l.kind == LoadKind::DtnRead || l.kind == LoadKind::DtnWrite) {
      std::set<int> used;
      for (std::size_t j : active) {
        const auto& job = jobs_[j].job;
        if (job.dtn_index == l.target) used.insert(l.kind == LoadKind::DtnRead ? job.source_ost_index : job.dest_ost_index);
      }
      for (int i = 0; i < oss; ++i)
        if (!used.contains(i)) others.push_back(i);
      if (others.empty())
        for (int i = 0; i < oss; ++i) others.push_back(i);
    }
    for (int k = 0; k < l.count; ++k) {
      FlowDemand f;
      int ost = -1;
      switch (l.kind) {
        case LoadKind::OstRead: f.resources = {res.s_ost(l.target)}; ost = l.target; break;
        case LoadKind::OstWrite: f.resources = {res.r_ost(l.target)}; ost = l.target; break;
        case LoadKind::DtnRead:
          ost = others[static_cast<std::size_t>(k) % others.size()];
          f.resources = {res.s_lnet(l.target), res.s_ost(ost)};
          break;
        case LoadKind::DtnWrite:
          ost = others[static_cast<std::size_t>(k) % others.size()];
          f.resources = {res.r_lnet(l.target), res.r_ost(ost)};
          break;
        case LoadKind::Wan: f.resources = {res.wan()}; break;
      }
      flows.push_back(std::move(f));
      load_flows.push_back({l.kind, l.target, ost});
    }
  }

  const std::vector<double> alloc = max_min_fair(cap, flows);

  // Aggregate layer loads.
  std::vector<double> s_ost_read(static_cast<std::size_t>(oss), 0.0), r_ost_write(static_cast<std::size_t>(oss), 0.0);
  std::vector<double> s_lnet(static_cast<std::size_t>(dtn), 0.0), r_lnet(static_cast<std::size_t>(dtn), 0.0);
  std::vector<double> s_wan_tx(static_cast<std::size_t>(dtn), 0.0), r_wan_rx(static_cast<std::size_t>(dtn), 0.0);
  std::vector<double> s_comp(static_cast<std::size_t>(dtn), 0.0), r_comp(static_cast<std::size_t>(dtn), 0.0);
  std::vector<double> s_host_files(static_cast<std::size_t>(dtn), 0.0), r_host_files(static_cast<std::size_t>(dtn), 0.0);
  double wan_competitors = 0;

  struct TransferFlow {
    std::size_t job;
    double wire;
    double goodput;
    double sent_packets;
    double retx_packets;
    double rtt;
  };
  std::vector<TransferFlow> tf;
  for (std::size_t i = 0; i < n_transfer_flows; ++i) {
    const std::size_t j = active[i];
    const double wire = alloc[i];
    const double goodput = std::min(jobs_[j].remaining, wire * efficiency);
    const double sent = std::round(wire / tb.mss_bytes);
    double retx = 0, rtt = rtt_eff;
    if (o.noise) {
      std::normal_distribution<double> nd(0.0, 1.0);
      const double z_rtt = nd(counter_rng_);
      const double z_jit = nd(counter_rng_);
      rtt = std::max(0.5 * tb.rtt_us, rtt_eff * (1.0 + o.rtt_noise * z_rtt) + jitter_us * z_jit);
      if (sent > 0) {
        std::binomial_distribution<std::int64_t> bd(static_cast<std::int64_t>(sent), retx_ratio);
        retx = static_cast<double>(bd(counter_rng_));
      }
    } else {
      retx = std::round(sent * retx_ratio);
    }
    tf.push_back({j, wire, goodput, sent, retx, rtt});

    const auto& job = jobs_[j].job;
    const auto h = static_cast<std::size_t>(job.dtn_index);
    s_ost_read[static_cast<std::size_t>(job.source_ost_index)] += goodput;
    r_ost_write[static_cast<std::size_t>(job.dest_ost_index)] += goodput;
    s_lnet[h] += goodput;
    r_lnet[h] += goodput;
    s_wan_tx[h] += wire;
    r_wan_rx[h] += goodput;
    s_host_files[h] += goodput / job.file_size_bytes;
    r_host_files[h] += goodput / job.file_size_bytes;
  }
  for (std::size_t k = 0; k < load_flows.size(); ++k) {
    const double a = alloc[n_transfer_flows + k];
    const auto& lf = load_flows[k];
    switch (lf.kind) {
      case LoadKind::OstRead: s_ost_read[static_cast<std::size_t>(lf.ost)] += a; break;
      case LoadKind::OstWrite: r_ost_write[static_cast<std::size_t>(lf.ost)] += a; break;
      case LoadKind::DtnRead:
        s_ost_read[static_cast<std::size_t>(lf.ost)] += a;
        s_lnet[static_cast<std::size_t>(lf.target)] += a;
        s_comp[static_cast<std::size_t>(lf.target)] += a;
        s_host_files[static_cast<std::size_t>(lf.target)] += a / kGiB;
        break;
      case LoadKind::DtnWrite:
        r_ost_write[static_cast<std::size_t>(lf.ost)] += a;
        r_lnet[static_cast<std::size_t>(lf.target)] += a;
        r_comp[static_cast<std::size_t>(lf.target)] += a;
        r_host_files[static_cast<std::size_t>(lf.target)] += a / kGiB;
        break;
      case LoadKind::Wan: wan_competitors += a; break;
    }
  }

  StepOutput out;
  out.t = t;
  for (int i = 0; i < oss; ++i) {
    out.capacities["s_ost" + std::to_string(i)] = cap[res.s_ost(i)];
    out.capacities["r_ost" + std::to_string(i)] = cap[res.r_ost(i)];
  }
  for (int h = 0; h < dtn; ++h) {
    out.capacities["s_lnet" + std::to_string(h)] = cap[res.s_lnet(h)];
    out.capacities["r_lnet" + std::to_string(h)] = cap[res.r_lnet(h)];
    out.capacities["s_wan" + std::to_string(h)] = cap[res.s_wan(h)];
    out.capacities["r_wan" + std::to_string(h)] = cap[res.r_wan(h)];
  }
  out.capacities["wan"] = cap[res.wan()];

  // OSS snapshots.
  for (int side = 0; side < 2; ++side) {
    const Side sd = side == 0 ? Side::Sender : Side::Receiver;
    for (int i = 0; i < oss; ++i) {
      OssSnapshot s;
      s.oss_id = oss_id(tb, sd, i);
      s.side = sd;
      s.ost_index = i;
      s.t = t;
      const double rd = sd == Side::Sender ? s_ost_read[static_cast<std::size_t>(i)] : 0.0;
      const double wr = sd == Side::Receiver ? r_ost_write[static_cast<std::size_t>(i)] : 0.0;
      s.ost = {rd, wr, rd / kIoSizeBytes, wr / kIoSizeBytes};
      out.oss.push_back(std::move(s));
    }
  }

  // Host snapshots.
  for (int side = 0; side < 2; ++side) {
    const Side sd = side == 0 ? Side::Sender : Side::Receiver;
    const bool snd = sd == Side::Sender;
    for (int h = 0; h < dtn; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      HostSnapshot hsnap;
      hsnap.host_id = host_id(tb, sd, h);
      hsnap.testbed_id = tb.id;
      hsnap.side = sd;
      hsnap.t = t;

      double ack_bytes = 0, data_packets = 0, retx_total = 0, corrupt_packets = 0, dup_packets = 0;
      for (const auto& f : tf) {
        if (jobs_[f.job].job.dtn_index != h) continue;
        ack_bytes += f.goodput / tb.mss_bytes / 2.0 * kAckBytes;
        data_packets += f.sent_packets;
        retx_total += f.retx_packets;
        corrupt_packets += std::round(f.sent_packets * corrupt_p);
        dup_packets += std::round(f.sent_packets * dup_p);
      }
      const double lnet = snd ? s_lnet[hs] : r_lnet[hs];
      const double util = lnet / tb.lnet_nic_bytes_per_s;
      const double files = snd ? s_host_files[hs] : r_host_files[hs];
      auto& c = hsnap.counters;
      if (snd) {
        c["lnet_nic_rx_bytes_per_s"] = lnet;
        c["lnet_nic_tx_bytes_per_s"] = lnet / kLustreRpcBytes * 512;
        c["wan_nic_tx_bytes_per_s"] = s_wan_tx[hs];
        c["wan_nic_rx_bytes_per_s"] = ack_bytes;
        c["wan_nic_tx_packets_per_s"] = data_packets;
        c["wan_nic_rx_packets_per_s"] = std::round(ack_bytes / kAckBytes);
        c["osc_read_rpcs_per_s"] = lnet / kLustreRpcBytes;
        c["osc_write_rpcs_per_s"] = 0;
      } else {
        c["lnet_nic_tx_bytes_per_s"] = lnet;
        c["lnet_nic_rx_bytes_per_s"] = lnet / kLustreRpcBytes * 512;
        c["wan_nic_rx_bytes_per_s"] = r_wan_rx[hs];
        c["wan_nic_tx_bytes_per_s"] = ack_bytes;
        c["wan_nic_rx_packets_per_s"] = data_packets - retx_total + dup_packets;
        c["wan_nic_tx_packets_per_s"] = std::round(ack_bytes / kAckBytes);
        c["osc_read_rpcs_per_s"] = 0;
        c["osc_write_rpcs_per_s"] = lnet / kLustreRpcBytes;
      }
      c["lnet_nic_rx_packets_per_s"] = std::round(c["lnet_nic_rx_bytes_per_s"] / 8192.0);
      c["lnet_nic_tx_packets_per_s"] = std::round(c["lnet_nic_tx_bytes_per_s"] / 8192.0);
      c["lnet_nic_rx_drops"] = 0;
      c["lnet_nic_tx_drops"] = 0;
      c["lnet_nic_errors"] = 0;
      c["wan_nic_rx_drops"] = 0;
      c["wan_nic_tx_drops"] = 0;
      c["wan_nic_errors"] = snd ? 0 : corrupt_packets;
      c["osc_pending_rpcs"] = std::round(8 * util);
      c["osc_dirty_bytes"] = snd ? 0 : std::min(lnet, 2 * kGiB) * 0.25;
      c["osc_cached_bytes"] = snd ? std::min(lnet, 4 * kGiB) : 0;
      c["osc_read_latency_us"] = snd ? 400.0 * (1.0 + 3.0 * util) : 0;
      c["osc_write_latency_us"] = snd ? 0 : 600.0 * (1.0 + 3.0 * util);
      c["mdc_open_per_s"] = files;
      c["mdc_close_per_s"] = files;
      c["mdc_getattr_per_s"] = 3 * files + 1;
      c["mdc_setattr_per_s"] = snd ? 0 : files;
      c["mdc_statfs_per_s"] = 0.1;
      c["mdc_pending_rpcs"] = 0;
      c["cpu_user_pct"] = clamp_pct(1.0 + 20.0 * util);
      c["cpu_system_pct"] = clamp_pct(2.0 + 25.0 * util);
      c["cpu_iowait_pct"] = clamp_pct(0.5 + 10.0 * util);
      c["cpu_idle_pct"] = clamp_pct(100.0 - c["cpu_user_pct"] - c["cpu_system_pct"] - c["cpu_iowait_pct"]);
      c["mem_used_bytes"] = 4 * kGiB + 64 * kMiB * static_cast<double>(tf.size());
      c["mem_cached_bytes"] = std::min(64 * kGiB, 8 * kGiB + 4.0 * lnet);
      c["load_avg_1m"] = 0.2 + 8.0 * util;
      c["context_switches_per_s"] = 2000.0 + lnet / (64 * 1024.0);
      (void)s_comp;
      (void)r_comp;

      for (const auto& f : tf) {
        const auto& js = jobs_[f.job];
        if (js.job.dtn_index != h) continue;
        TransferCounters tc;
        tc.transfer_id = js.job.transfer_id;
        tc.ost_index = snd ? js.job.source_ost_index : js.job.dest_ost_index;
        tc.peer_host = host_id(tb, snd ? Side::Receiver : Side::Sender, h);
        auto& v = tc.values;
        const double per_stream = f.goodput / streams;
        const double cwnd = per_stream * f.rtt * 1e-6 / tb.mss_bytes;
        const double rttvar = 0.05 * f.rtt + jitter_us;
        v["throughput_bytes_per_s"] = f.goodput;
        v["client_read_bytes_per_s"] = snd ? f.goodput : 0;
        v["client_write_bytes_per_s"] = snd ? 0 : f.goodput;
        v["tcp_send_buf_max_bytes"] = snd ? send_buf[hs] : tb.default_tcp_buf_max_bytes;
        v["tcp_recv_buf_max_bytes"] = snd ? tb.default_tcp_buf_max_bytes : recv_buf[hs];
        v["retransmitted_packets"] = snd ? f.retx_packets : 0;
        v["total_sent_packets"] = snd ? f.sent_packets : std::round(f.goodput / tb.mss_bytes / 2.0);
        v["rtt_us"] = f.rtt;
        v["tcp_cwnd_segments"] = cwnd;
        v["tcp_ssthresh_segments"] = std::max(2.0, p_total > 0 ? 0.7 * cwnd : 1.5 * cwnd);
        v["tcp_rto_us"] = std::max(200000.0, f.rtt + 4 * rttvar);
        v["tcp_rttvar_us"] = rttvar;
        v["tcp_mss_bytes"] = tb.mss_bytes;
        v["tcp_bytes_in_flight"] = f.goodput * f.rtt * 1e-6;
        if (snd) {
          v["tcp_bytes_acked"] = js.done + f.goodput;
          v["tcp_lost_packets"] = p_total > 0 ? std::round(f.retx_packets / o.retransmit_amplification) : 0;
          v["tcp_sacked_packets"] = 3 * f.retx_packets;
        } else {
          v["tcp_bytes_received"] = js.done + f.goodput;
        }
        v["proc_cpu_pct"] = clamp_pct(3.0 + f.goodput / 2e7);
        v["proc_rss_bytes"] = 64 * kMiB + streams * 4 * kMiB;
        v["proc_io_syscalls_per_s"] = f.goodput / kIoSizeBytes;
        v["proc_open_files"] = 3.0 + static_cast<double>(std::min<std::int64_t>(js.job.file_count, 4));
        v["proc_threads"] = streams + 2;
        hsnap.transfers.emplace(tc.transfer_id, std::move(tc));
      }
      out.hosts.push_back(std::move(hsnap));
    }
  }

  // Minimal metrics straight from the flow state.
  for (const auto& f : tf) {
    const auto& js = jobs_[f.job];
    const auto h = static_cast<std::size_t>(js.job.dtn_index);
    TransferTruth tt;
    tt.transfer_id = js.job.transfer_id;
    auto& m = tt.metrics;
    m[index_of(Minimal::SenderOstRead)] = s_ost_read[static_cast<std::size_t>(js.job.source_ost_index)];
    m[index_of(Minimal::SenderClientRead)] = f.goodput;
    m[index_of(Minimal::SenderLnetNicRx)] = s_lnet[h];
    m[index_of(Minimal::SenderWanNicTx)] = s_wan_tx[h];
    m[index_of(Minimal::SenderTcpSendBufMax)] = send_buf[h];
    m[index_of(Minimal::SenderRetransmitted)] = f.retx_packets;
    m[index_of(Minimal::SenderTotalSent)] = f.sent_packets;
    m[index_of(Minimal::SenderRtt)] = f.rtt;
    m[index_of(Minimal::ReceiverOstWrite)] = r_ost_write[static_cast<std::size_t>(js.job.dest_ost_index)];
    m[index_of(Minimal::ReceiverClientWrite)] = f.goodput;
    m[index_of(Minimal::ReceiverLnetNicTx)] = r_lnet[h];
    m[index_of(Minimal::ReceiverWanNicRx)] = r_wan_rx[h];
    m[index_of(Minimal::ReceiverTcpRecvBufMax)] = recv_buf[h];
    m[index_of(Minimal::TransferThroughput)] = f.goodput;
    out.transfers.push_back(std::move(tt));
  }

  for (const auto& f : tf) {
    auto& js = jobs_[f.job];
    js.done += f.goodput;
    js.remaining = std::max(0.0, js.remaining - f.goodput);
  }
  (void)wan_competitors;
  ++t_;
  return out;
}

void run_simulation(const SimRun& run, const std::function<void(const StepOutput&)>& sink) {
  Simulator sim(run);
  while (!sim.finished()) sink(sim.step());
}

double steady_throughput(const TestbedSpec& tb, std::optional<AnomalySpec> anomaly, const SimOptions& opts) {
  SimRun run;
  run.testbed = tb;
  run.options = opts;
  run.options.noise = false;
  run.duration_s = 1;
  run.jobs.push_back({"probe", 1, 1e18, 0, 0, 0, 0});
  if (anomaly) {
    anomaly->start_s = 0;
    anomaly->end_s = 1;
    run.anomalies.push_back(*anomaly);
  }
  Simulator sim(std::move(run));
  const auto out = sim.step();
  return out.transfers.at(0).metrics[index_of(Minimal::TransferThroughput)];
}

}  // namespace xfermon
