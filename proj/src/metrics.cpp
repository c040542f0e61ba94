#include "xfermon/metrics.hpp"

#include <cmath>
#include <unordered_map>

#include "xfermon/codec.hpp"

namespace xfermon {
namespace {

struct Row {
  const char* suffix;
  Layer layer;
  Unit unit;
  Source source;
  const char* field;
  int slot = -1;
};

void add(std::vector<MetricKey>& out, std::string name, Side side, const Row& r) {
  MetricKey k{std::move(name), side, r.layer, r.unit, r.source, r.field, r.slot,
              MetricId{static_cast<std::uint16_t>(out.size())}};
  out.push_back(std::move(k));
}

// Per-side extension counters. `counterpart` entries differ by side: the
// sender reports the opposite I/O direction of what the minimal set holds.
void add_side(std::vector<MetricKey>& out, Side side) {
  const bool snd = side == Side::Sender;
  const std::string p = snd ? "sender_" : "receiver_";
  auto put = [&](const Row& r) { add(out, p + r.suffix, side, r); };

  static constexpr const char* kOstSlotFields[4] = {"read_bytes_per_s", "write_bytes_per_s", "read_iops",
                                                    "write_iops"};
  for (int slot = 0; slot < 3; ++slot) {
    for (const char* f : kOstSlotFields) {
      const std::string suffix = "ost" + std::to_string(slot) + "_" + f;
      const Unit u = std::string_view(f).ends_with("iops") ? Unit::Count : Unit::BytesPerSecond;
      add(out, p + suffix, side, Row{"", Layer::OstServer, u, Source::OstSlot, f, slot});
    }
  }
  put({"ost_read_iops", Layer::OstServer, Unit::Count, Source::TransferOst, "read_iops"});
  put({"ost_write_iops", Layer::OstServer, Unit::Count, Source::TransferOst, "write_iops"});
  if (snd)
    put({"ost_write_bytes_per_s", Layer::OstServer, Unit::BytesPerSecond, Source::TransferOst, "write_bytes_per_s"});
  else
    put({"ost_read_bytes_per_s", Layer::OstServer, Unit::BytesPerSecond, Source::TransferOst, "read_bytes_per_s"});

  if (snd)
    put({"client_write_bytes_per_s", Layer::LustreClient, Unit::BytesPerSecond, Source::Transfer,
         "client_write_bytes_per_s"});
  else
    put({"client_read_bytes_per_s", Layer::LustreClient, Unit::BytesPerSecond, Source::Transfer,
         "client_read_bytes_per_s"});
  put({"osc_read_rpcs_per_s", Layer::LustreClient, Unit::Count, Source::Host, "osc_read_rpcs_per_s"});
  put({"osc_write_rpcs_per_s", Layer::LustreClient, Unit::Count, Source::Host, "osc_write_rpcs_per_s"});
  put({"osc_pending_rpcs", Layer::LustreClient, Unit::Count, Source::Host, "osc_pending_rpcs"});
  put({"osc_dirty_bytes", Layer::LustreClient, Unit::Bytes, Source::Host, "osc_dirty_bytes"});
  put({"osc_cached_bytes", Layer::LustreClient, Unit::Bytes, Source::Host, "osc_cached_bytes"});
  put({"osc_read_latency_us", Layer::LustreClient, Unit::Microseconds, Source::Host, "osc_read_latency_us"});
  put({"osc_write_latency_us", Layer::LustreClient, Unit::Microseconds, Source::Host, "osc_write_latency_us"});

  put({"mdc_open_per_s", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_open_per_s"});
  put({"mdc_close_per_s", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_close_per_s"});
  put({"mdc_getattr_per_s", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_getattr_per_s"});
  put({"mdc_setattr_per_s", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_setattr_per_s"});
  put({"mdc_statfs_per_s", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_statfs_per_s"});
  put({"mdc_pending_rpcs", Layer::MetadataClient, Unit::Count, Source::Host, "mdc_pending_rpcs"});

  put({"cpu_user_pct", Layer::DtnHost, Unit::Dimensionless, Source::Host, "cpu_user_pct"});
  put({"cpu_system_pct", Layer::DtnHost, Unit::Dimensionless, Source::Host, "cpu_system_pct"});
  put({"cpu_iowait_pct", Layer::DtnHost, Unit::Dimensionless, Source::Host, "cpu_iowait_pct"});
  put({"cpu_idle_pct", Layer::DtnHost, Unit::Dimensionless, Source::Host, "cpu_idle_pct"});
  put({"mem_used_bytes", Layer::DtnHost, Unit::Bytes, Source::Host, "mem_used_bytes"});
  put({"mem_cached_bytes", Layer::DtnHost, Unit::Bytes, Source::Host, "mem_cached_bytes"});
  put({"load_avg_1m", Layer::DtnHost, Unit::Dimensionless, Source::Host, "load_avg_1m"});
  put({"context_switches_per_s", Layer::DtnHost, Unit::Count, Source::Host, "context_switches_per_s"});

  if (snd)
    put({"lnet_nic_tx_bytes_per_s", Layer::LustreNic, Unit::BytesPerSecond, Source::Host, "lnet_nic_tx_bytes_per_s"});
  else
    put({"lnet_nic_rx_bytes_per_s", Layer::LustreNic, Unit::BytesPerSecond, Source::Host, "lnet_nic_rx_bytes_per_s"});
  put({"lnet_nic_rx_packets_per_s", Layer::LustreNic, Unit::Packets, Source::Host, "lnet_nic_rx_packets_per_s"});
  put({"lnet_nic_tx_packets_per_s", Layer::LustreNic, Unit::Packets, Source::Host, "lnet_nic_tx_packets_per_s"});
  put({"lnet_nic_rx_drops", Layer::LustreNic, Unit::Packets, Source::Host, "lnet_nic_rx_drops"});
  put({"lnet_nic_tx_drops", Layer::LustreNic, Unit::Packets, Source::Host, "lnet_nic_tx_drops"});
  put({"lnet_nic_errors", Layer::LustreNic, Unit::Packets, Source::Host, "lnet_nic_errors"});

  if (snd)
    put({"wan_nic_rx_bytes_per_s", Layer::WanNic, Unit::BytesPerSecond, Source::Host, "wan_nic_rx_bytes_per_s"});
  else
    put({"wan_nic_tx_bytes_per_s", Layer::WanNic, Unit::BytesPerSecond, Source::Host, "wan_nic_tx_bytes_per_s"});
  put({"wan_nic_rx_packets_per_s", Layer::WanNic, Unit::Packets, Source::Host, "wan_nic_rx_packets_per_s"});
  put({"wan_nic_tx_packets_per_s", Layer::WanNic, Unit::Packets, Source::Host, "wan_nic_tx_packets_per_s"});
  put({"wan_nic_rx_drops", Layer::WanNic, Unit::Packets, Source::Host, "wan_nic_rx_drops"});
  put({"wan_nic_tx_drops", Layer::WanNic, Unit::Packets, Source::Host, "wan_nic_tx_drops"});
  put({"wan_nic_errors", Layer::WanNic, Unit::Packets, Source::Host, "wan_nic_errors"});

  put({"tcp_cwnd_segments", Layer::TcpConnection, Unit::Count, Source::Transfer, "tcp_cwnd_segments"});
  put({"tcp_ssthresh_segments", Layer::TcpConnection, Unit::Count, Source::Transfer, "tcp_ssthresh_segments"});
  put({"tcp_rto_us", Layer::TcpConnection, Unit::Microseconds, Source::Transfer, "tcp_rto_us"});
  put({"tcp_rttvar_us", Layer::TcpConnection, Unit::Microseconds, Source::Transfer, "tcp_rttvar_us"});
  put({"tcp_mss_bytes", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_mss_bytes"});
  put({"tcp_bytes_in_flight", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_bytes_in_flight"});
  if (snd) {
    put({"tcp_recv_buf_max_bytes", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_recv_buf_max_bytes"});
    put({"tcp_bytes_acked", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_bytes_acked"});
    put({"tcp_lost_packets", Layer::TcpConnection, Unit::Packets, Source::Transfer, "tcp_lost_packets"});
    put({"tcp_sacked_packets", Layer::TcpConnection, Unit::Packets, Source::Transfer, "tcp_sacked_packets"});
  } else {
    put({"tcp_send_buf_max_bytes", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_send_buf_max_bytes"});
    put({"tcp_bytes_received", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_bytes_received"});
    put({"retransmitted_packets", Layer::TcpConnection, Unit::Packets, Source::Transfer, "retransmitted_packets"});
    put({"total_sent_packets", Layer::TcpConnection, Unit::Packets, Source::Transfer, "total_sent_packets"});
  }

  put({"proc_cpu_pct", Layer::TransferProcess, Unit::Dimensionless, Source::Transfer, "proc_cpu_pct"});
  put({"proc_rss_bytes", Layer::TransferProcess, Unit::Bytes, Source::Transfer, "proc_rss_bytes"});
  if (snd)
    put({"proc_read_syscalls_per_s", Layer::TransferProcess, Unit::Count, Source::Transfer, "proc_io_syscalls_per_s"});
  else
    put({"proc_write_syscalls_per_s", Layer::TransferProcess, Unit::Count, Source::Transfer,
         "proc_io_syscalls_per_s"});
  put({"proc_open_files", Layer::TransferProcess, Unit::Count, Source::Transfer, "proc_open_files"});
  put({"proc_threads", Layer::TransferProcess, Unit::Count, Source::Transfer, "proc_threads"});
}

std::vector<MetricKey> build_full_catalog() {
  std::vector<MetricKey> out;
  out.reserve(kFullCount);
  const auto S = Side::Sender;
  const auto R = Side::Receiver;
  add(out, "sender_ost_read_bytes_per_s", S,
      {"", Layer::OstServer, Unit::BytesPerSecond, Source::TransferOst, "read_bytes_per_s"});
  add(out, "sender_client_read_bytes_per_s", S,
      {"", Layer::LustreClient, Unit::BytesPerSecond, Source::Transfer, "client_read_bytes_per_s"});
  add(out, "sender_lnet_nic_rx_bytes_per_s", S,
      {"", Layer::LustreNic, Unit::BytesPerSecond, Source::Host, "lnet_nic_rx_bytes_per_s"});
  add(out, "sender_wan_nic_tx_bytes_per_s", S,
      {"", Layer::WanNic, Unit::BytesPerSecond, Source::Host, "wan_nic_tx_bytes_per_s"});
  add(out, "sender_tcp_send_buf_max_bytes", S,
      {"", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_send_buf_max_bytes"});
  add(out, "sender_retransmitted_packets", S,
      {"", Layer::TcpConnection, Unit::Packets, Source::Transfer, "retransmitted_packets"});
  add(out, "sender_total_sent_packets", S,
      {"", Layer::TcpConnection, Unit::Packets, Source::Transfer, "total_sent_packets"});
  add(out, "sender_rtt_us", S, {"", Layer::TcpConnection, Unit::Microseconds, Source::Transfer, "rtt_us"});
  add(out, "receiver_ost_write_bytes_per_s", R,
      {"", Layer::OstServer, Unit::BytesPerSecond, Source::TransferOst, "write_bytes_per_s"});
  add(out, "receiver_client_write_bytes_per_s", R,
      {"", Layer::LustreClient, Unit::BytesPerSecond, Source::Transfer, "client_write_bytes_per_s"});
  add(out, "receiver_lnet_nic_tx_bytes_per_s", R,
      {"", Layer::LustreNic, Unit::BytesPerSecond, Source::Host, "lnet_nic_tx_bytes_per_s"});
  add(out, "receiver_wan_nic_rx_bytes_per_s", R,
      {"", Layer::WanNic, Unit::BytesPerSecond, Source::Host, "wan_nic_rx_bytes_per_s"});
  add(out, "receiver_tcp_recv_buf_max_bytes", R,
      {"", Layer::TcpConnection, Unit::Bytes, Source::Transfer, "tcp_recv_buf_max_bytes"});
  add(out, "transfer_throughput_bytes_per_s", S,
      {"", Layer::TransferProcess, Unit::BytesPerSecond, Source::Transfer, "throughput_bytes_per_s"});
  add_side(out, S);
  add_side(out, R);
  return out;
}

const std::vector<MetricKey>& full_catalog() {
  static const std::vector<MetricKey> cat = build_full_catalog();
  return cat;
}

const std::unordered_map<std::string_view, MetricId>& name_index() {
  static const auto idx = [] {
    std::unordered_map<std::string_view, MetricId> m;
    for (const auto& k : full_catalog()) m.emplace(k.name, k.id);
    return m;
  }();
  return idx;
}

}  // namespace

std::span<const MetricKey> catalog(Profile profile) {
  const auto& cat = full_catalog();
  if (profile == Profile::Minimal14) return {cat.data(), kMinimalCount};
  return {cat.data(), cat.size()};
}

const MetricKey& key(MetricId id) { return full_catalog().at(to_index(id)); }

std::optional<MetricId> find_key(std::string_view name) {
  const auto& idx = name_index();
  if (auto it = idx.find(name); it != idx.end()) return it->second;
  return std::nullopt;
}

bool in_profile(MetricId id, Profile profile) {
  return to_index(id) < (profile == Profile::Minimal14 ? kMinimalCount : kFullCount);
}

std::string_view to_string(Profile p) { return p == Profile::Minimal14 ? "Minimal14" : "Full142"; }

std::optional<Profile> parse_profile(std::string_view s) {
  if (s == "Minimal14" || s == "minimal" || s == "14") return Profile::Minimal14;
  if (s == "Full142" || s == "full" || s == "142") return Profile::Full142;
  return std::nullopt;
}

std::string_view to_string(Side s) { return s == Side::Sender ? "Sender" : "Receiver"; }

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::OstServer: return "OstServer";
    case Layer::LustreClient: return "LustreClient";
    case Layer::MetadataClient: return "MetadataClient";
    case Layer::DtnHost: return "DtnHost";
    case Layer::LustreNic: return "LustreNic";
    case Layer::WanNic: return "WanNic";
    case Layer::TcpConnection: return "TcpConnection";
    case Layer::TransferProcess: return "TransferProcess";
  }
  return "?";
}

namespace {
constexpr std::array<std::string_view, kAnomalyClassCount> kClassNames = {
    "Normal",
    "ReceiverOstWriteCongestion",
    "ReceiverClientWriteCongestion",
    "SenderOstReadCongestion",
    "SenderClientReadCongestion",
    "SenderTcpBufferMisconfig",
    "ReceiverTcpBufferMisconfig",
    "NetworkLoss",
    "NetworkCongestion",
    "Corrupt",
    "Reorder",
    "Duplicate",
    "Jitter",
};
}  // namespace

std::array<AnomalyClass, kLabelCount> label_classes() {
  std::array<AnomalyClass, kLabelCount> out{};
  for (std::size_t i = 0; i < kLabelCount; ++i) out[i] = static_cast<AnomalyClass>(i);
  return out;
}

std::string_view to_string(AnomalyClass c) { return kClassNames.at(static_cast<std::size_t>(c)); }

std::optional<AnomalyClass> parse_anomaly_class(std::string_view s) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == s) return static_cast<AnomalyClass>(i);
  return std::nullopt;
}

std::optional<double> MetricEnvelope::get(MetricId id) const {
  if (auto it = values.find(id); it != values.end()) return it->second;
  return std::nullopt;
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::MissingKey: return "missing key";
    case ViolationKind::ExtraKey: return "extra key";
    case ViolationKind::NegativeValue: return "negative value";
    case ViolationKind::NonFiniteValue: return "non-finite value";
    case ViolationKind::NonPositiveRtt: return "non-positive rtt";
    case ViolationKind::RetransmitsExceedSent: return "retransmits exceed sent";
    case ViolationKind::IdTooLong: return "id too long";
    case ViolationKind::GapWithValues: return "gap marker with values";
    case ViolationKind::Oversize: return "oversize serialization";
  }
  return "?";
}

std::size_t payload_budget(Profile p) {
  return p == Profile::Minimal14 ? kMinimalPayloadBudget : kFullPayloadBudget;
}

std::vector<Violation> validate(const MetricEnvelope& env) {
  std::vector<Violation> out;
  auto violate = [&](ViolationKind k, std::string key_name, std::string msg) {
    out.push_back({k, std::move(key_name), std::move(msg)});
  };

  if (env.transfer_id.size() > kMaxIdLength) violate(ViolationKind::IdTooLong, "transfer_id", "transfer_id too long");
  if (env.testbed_id.size() > kMaxIdLength) violate(ViolationKind::IdTooLong, "testbed_id", "testbed_id too long");

  if (env.gap) {
    if (!env.values.empty()) violate(ViolationKind::GapWithValues, "", "gap marker must not carry values");
    return out;
  }

  for (const auto& k : catalog(env.profile))
    if (!env.values.contains(k.id)) violate(ViolationKind::MissingKey, k.name, "missing key " + k.name);

  for (const auto& [id, v] : env.values) {
    if (to_index(id) >= kFullCount || !in_profile(id, env.profile)) {
      violate(ViolationKind::ExtraKey, std::to_string(to_index(id)), "key not in profile");
      continue;
    }
    const auto& k = key(id);
    if (!std::isfinite(v))
      violate(ViolationKind::NonFiniteValue, k.name, k.name + " is not finite");
    else if (v < 0)
      violate(ViolationKind::NegativeValue, k.name, k.name + " is negative");
  }

  if (auto rtt = env.get(Minimal::SenderRtt); rtt && *rtt <= 0)
    violate(ViolationKind::NonPositiveRtt, "sender_rtt_us", "rtt must be strictly positive");

  auto check_pair = [&](std::string_view retx, std::string_view sent) {
    auto r = find_key(retx), s = find_key(sent);
    if (!r || !s) return;
    auto rv = env.get(*r), sv = env.get(*s);
    if (rv && sv && *rv > *sv)
      violate(ViolationKind::RetransmitsExceedSent, std::string(retx), "retransmits exceed sent");
  };
  check_pair("sender_retransmitted_packets", "sender_total_sent_packets");
  if (env.profile == Profile::Full142)
    check_pair("receiver_retransmitted_packets", "receiver_total_sent_packets");

  // The wire format stores ids with a one-byte length.
  if (env.transfer_id.size() <= 255 && env.testbed_id.size() <= 255) {
    const auto size = encoded_size(env);
    if (size > payload_budget(env.profile))
      violate(ViolationKind::Oversize, "", "serialized size " + std::to_string(size) + " exceeds budget");
  }
  return out;
}

}  // namespace xfermon
