#pragma once

// Metric catalog and the envelope value type shared by the simulator, the
// monitoring agents, the collector and the classifier.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xfermon {

enum class Side : std::uint8_t { Sender, Receiver };

enum class Layer : std::uint8_t {
  OstServer,
  LustreClient,
  MetadataClient,
  DtnHost,
  LustreNic,
  WanNic,
  TcpConnection,
  TransferProcess,
};

enum class Unit : std::uint8_t { BytesPerSecond, Bytes, Packets, Microseconds, Count, Dimensionless };

enum class Profile : std::uint8_t { Minimal14, Full142 };

// Where an agent finds the raw counter behind a catalog key.
enum class Source : std::uint8_t {
  Host,         // per-DTN counter in the host snapshot
  Transfer,     // per-transfer counter in the host snapshot
  TransferOst,  // the OST that holds the transfer's file
  OstSlot,      // a fixed OST slot of the side's storage servers
};

// Index into the full catalog. Minimal keys occupy indices [0, 14).
enum class MetricId : std::uint16_t {};

constexpr std::uint16_t to_index(MetricId id) { return static_cast<std::uint16_t>(id); }

struct MetricKey {
  std::string name;
  Side side;
  Layer layer;
  Unit unit;
  Source source;
  std::string field;  // counter name inside the snapshot (OST field for OST sources)
  int ost_slot = -1;  // OstSlot only
  MetricId id{};
};

inline constexpr std::size_t kFullCount = 142;
inline constexpr std::size_t kMinimalCount = 14;

// The 14 metrics the rule engine needs, in canonical catalog order.
enum class Minimal : std::uint8_t {
  SenderOstRead,
  SenderClientRead,
  SenderLnetNicRx,
  SenderWanNicTx,
  SenderTcpSendBufMax,
  SenderRetransmitted,
  SenderTotalSent,
  SenderRtt,
  ReceiverOstWrite,
  ReceiverClientWrite,
  ReceiverLnetNicTx,
  ReceiverWanNicRx,
  ReceiverTcpRecvBufMax,
  TransferThroughput,
};

constexpr std::size_t index_of(Minimal m) { return static_cast<std::size_t>(m); }
constexpr MetricId id_of(Minimal m) { return MetricId{static_cast<std::uint16_t>(m)}; }

// Ordered catalog for a profile. The returned span is stable for the process
// lifetime and identical across runs.
std::span<const MetricKey> catalog(Profile profile);

const MetricKey& key(MetricId id);
std::optional<MetricId> find_key(std::string_view name);
bool in_profile(MetricId id, Profile profile);

std::string_view to_string(Profile p);
std::optional<Profile> parse_profile(std::string_view s);
std::string_view to_string(Side s);
std::string_view to_string(Layer l);

enum class AnomalyClass : std::uint8_t {
  Normal,
  ReceiverOstWriteCongestion,
  ReceiverClientWriteCongestion,
  SenderOstReadCongestion,
  SenderClientReadCongestion,
  SenderTcpBufferMisconfig,
  ReceiverTcpBufferMisconfig,
  NetworkLoss,
  NetworkCongestion,
  // simulation-only disturbances, never produced by a classifier
  Corrupt,
  Reorder,
  Duplicate,
  Jitter,
};

inline constexpr std::size_t kLabelCount = 9;
inline constexpr std::size_t kAnomalyClassCount = 13;

constexpr bool is_label(AnomalyClass c) { return static_cast<std::size_t>(c) < kLabelCount; }
constexpr std::size_t label_index(AnomalyClass c) { return static_cast<std::size_t>(c); }

std::array<AnomalyClass, kLabelCount> label_classes();
std::string_view to_string(AnomalyClass c);
std::optional<AnomalyClass> parse_anomaly_class(std::string_view s);

inline constexpr std::size_t kMaxIdLength = 64;

// One per-second bundle of a transfer's counters from both endpoints. A gap
// marker records a tick the agent could not collect and carries no values.
struct MetricEnvelope {
  std::string transfer_id;
  std::string testbed_id;
  std::int64_t timestamp = 0;
  Profile profile = Profile::Minimal14;
  bool gap = false;
  std::map<MetricId, double> values;

  std::optional<double> get(MetricId id) const;
  std::optional<double> get(Minimal m) const { return get(id_of(m)); }

  friend bool operator==(const MetricEnvelope&, const MetricEnvelope&) = default;
};

enum class ViolationKind : std::uint8_t {
  MissingKey,
  ExtraKey,
  NegativeValue,
  NonFiniteValue,
  NonPositiveRtt,
  RetransmitsExceedSent,
  IdTooLong,
  GapWithValues,
  Oversize,
};

struct Violation {
  ViolationKind kind;
  std::string key;
  std::string message;
};

std::string_view to_string(ViolationKind k);

// Serialized size budgets per profile.
inline constexpr std::size_t kMinimalPayloadBudget = 320;
inline constexpr std::size_t kFullPayloadBudget = 1700;

std::size_t payload_budget(Profile p);

// Every invariant violation of the envelope; empty means valid.
std::vector<Violation> validate(const MetricEnvelope& env);

}  // namespace xfermon
