#pragma once

// Ingest service: validates framed envelopes, persists each (transfer_id, t)
// exactly once to append-only NDJSON segments through a single writer, and
// answers per-transfer time-series queries from an in-memory index.
//
// Segment record, one per line:
//   {"transfer_id":..,"testbed_id":..,"t":..,"profile":"Minimal14","gap":false,"values":{"<key>":v,...}}

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "xfermon/dataset.hpp"
#include "xfermon/metrics.hpp"
#include "xfermon/net.hpp"

namespace xfermon {

struct CollectorConfig {
  std::filesystem::path data_dir;
  std::size_t segment_max_bytes = 64u << 20;
  std::int64_t dedup_window_s = 600;
  double max_persist_per_s = 0;  // 0 = unthrottled
  std::size_t batch_max = 4096;
};

struct IngestStats {
  double msgs_per_s = 0;
  std::size_t queue_depth = 0;
  std::uint64_t persisted_total = 0;
  std::uint64_t reject_total = 0;
  std::uint64_t duplicate_total = 0;
  std::uint64_t received_total = 0;
};

enum class SubmitResult : std::uint8_t { Accepted, Rejected };

struct QueryRow {
  std::int64_t t = 0;
  bool gap = false;
  std::vector<std::optional<double>> values;  // one per requested key; null in gaps
};

struct QueryResult {
  std::vector<std::string> keys;
  std::vector<QueryRow> rows;
};

// Truncates a torn final record in every segment under `dir`. Returns the
// number of bytes removed.
std::size_t repair_segments(const std::filesystem::path& dir);

class Collector {
 public:
  // Opens (and repairs) the store, loads the index and starts the writer.
  explicit Collector(CollectorConfig config);
  ~Collector();
  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;

  // Decodes and validates one frame payload; safe to call from many threads.
  SubmitResult submit_payload(std::span<const std::uint8_t> payload);
  SubmitResult submit(MetricEnvelope env);

  // Blocks until everything submitted so far has been written.
  void flush();
  void stop();

  IngestStats stats() const;

  // Rows with t0 <= t <= t1 in time order. Empty `keys` selects the minimal
  // profile. Throws NotFound for an unknown transfer and DomainError for an
  // unknown key.
  QueryResult query(const std::string& transfer_id, std::int64_t t0, std::int64_t t1,
                    std::vector<std::string> keys) const;
  std::vector<std::string> transfers() const;

  // Minimal rows of every transfer recorded for the testbed `run_id`, gap
  // markers omitted, ordered by (transfer_id, t). Labels come from `labels`,
  // else from a "<testbed>-<Class>-<n>" transfer id, else Normal.
  std::vector<DatasetRow> export_rows(const std::string& run_id,
                                      const std::map<std::string, AnomalyClass>& labels = {}) const;
  void export_dataset(std::ostream& out, const std::string& run_id,
                      const std::map<std::string, AnomalyClass>& labels = {}) const;

 private:
  struct Stored {
    std::int64_t t = 0;
    bool gap = false;
    Profile profile = Profile::Minimal14;
    std::vector<double> values;  // catalog order for the profile
  };
  struct TransferIndex {
    std::string testbed_id;
    std::map<std::int64_t, Stored> rows;
    std::int64_t max_t = 0;
  };

  void load();
  void writer_loop();
  void open_segment();
  bool accept_locked(const MetricEnvelope& env);

  CollectorConfig config_;
  mutable std::shared_mutex index_mu_;
  std::map<std::string, TransferIndex, std::less<>> index_;

  mutable std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable drained_cv_;
  std::deque<MetricEnvelope> queue_;
  std::uint64_t enqueued_ = 0;
  std::uint64_t processed_ = 0;
  bool stopping_ = false;
  bool writer_done_ = false;

  std::atomic<std::uint64_t> persisted_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::atomic<std::uint64_t> duplicates_{0};
  std::atomic<std::uint64_t> received_{0};
  std::atomic<double> rate_{0};

  int fd_ = -1;
  std::size_t segment_no_ = 0;
  std::size_t segment_bytes_ = 0;
  std::thread writer_;
};

// Accepts agent connections and feeds frames to a Collector. A frame larger
// than 64 KiB resets the connection.
class IngestServer {
 public:
  IngestServer(Collector& collector, const Endpoint& listen);
  ~IngestServer();
  std::uint16_t port() const { return listener_.port(); }
  std::uint64_t connections_reset() const { return resets_; }
  void stop();

 private:
  void accept_loop();
  void serve(std::shared_ptr<Socket> sock);

  Collector& collector_;
  Listener listener_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> resets_{0};
  std::mutex mu_;
  std::vector<std::shared_ptr<Socket>> conns_;
  std::vector<std::thread> threads_;
  std::thread acceptor_;
};

// Line protocol on a local socket:
//   QUERY <transfer_id> <t0> <t1> [keys...]  -> one NDJSON row per line, then {"end":true,"rows":N}
//   STATS                                    -> one JSON line
// Errors are answered with {"error":"..."}.
class QueryServer {
 public:
  QueryServer(const Collector& collector, const Endpoint& listen);
  ~QueryServer();
  std::uint16_t port() const { return listener_.port(); }
  void stop();

  // Handles one request line and returns the response text.
  static std::string handle(const Collector& collector, const std::string& line);

 private:
  void accept_loop();

  const Collector& collector_;
  Listener listener_;
  std::atomic<bool> stop_{false};
  std::mutex mu_;
  std::vector<std::shared_ptr<Socket>> conns_;
  std::vector<std::thread> threads_;
  std::thread acceptor_;
};

}  // namespace xfermon
