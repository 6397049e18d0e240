// Multi-hop transactional workloads against a cluster of shim nodes, or
// directly against storage ("bypass"), with per-attempt operation logs.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aft/clock.hpp"
#include "aft/storage.hpp"
#include "aft/txn_manager.hpp"

namespace aft::harness {

enum class Mode { shim, bypass };
std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);

struct WorkloadSpec {
  std::size_t clients = 10;
  std::size_t txns_per_client = 1000;
  std::size_t hops = 2;
  std::size_t reads_per_hop = 2;
  std::size_t writes_per_hop = 1;
  std::size_t keyspace = 1000;
  double zipf = 1.0;
  std::size_t value_size = 64;
  Mode mode = Mode::shim;
  std::size_t retry_limit = 5;
  std::uint64_t seed = 1;
  // when set, clients keep starting transactions until this much wall time
  // has passed and txns_per_client is ignored
  std::optional<std::uint64_t> duration_ms;
};

/// What the driver needs from a set of shim nodes. Node indices are stable;
/// a node that is down throws Error(unavailable).
class Cluster {
 public:
  virtual ~Cluster() = default;
  virtual std::size_t node_count() const = 0;
  virtual Uuid start(std::size_t node, std::optional<Uuid> reuse) = 0;
  virtual ReadResult get(std::size_t node, const Uuid& txn, const std::string& key) = 0;
  virtual void put(std::size_t node, const Uuid& txn, const std::string& key, Bytes value) = 0;
  virtual TransactionId commit(std::size_t node, const Uuid& txn) = 0;
  virtual void abort(std::size_t node, const Uuid& txn) = 0;
  /// The storage the nodes share; bypass mode talks to it directly.
  virtual Backend& storage() = 0;
  virtual Clock& clock() = 0;
};

/// Metadata embedded in every written value, so reads can be checked without
/// trusting whoever served them.
struct ValueTag {
  std::string key;
  std::string uuid;
  std::uint64_t ts = 0;  // bypass only; the shim assigns commit timestamps
  std::uint32_t seq = 0;  // position of the write within its transaction
  KeySet cowritten;
};

Bytes encode_value(const ValueTag& tag, std::size_t size);
/// nullopt when the bytes do not start with a well-formed tag.
std::optional<ValueTag> decode_value(std::string_view bytes);

enum class OpKind { read, write };

struct OpRecord {
  std::size_t hop = 0;
  OpKind kind = OpKind::read;
  std::string key;
  // reads
  bool null_read = false;
  bool own_write = false;  // as reported by the shim
  std::optional<TransactionId> reported;  // version reported by the shim
  std::optional<ValueTag> observed;  // decoded from the returned bytes
  bool undecodable = false;
  // writes
  std::uint32_t seq = 0;
};

/// One attempt at one logical transaction.
struct TxnLog {
  std::size_t client = 0;
  std::size_t logical = 0;  // index of the logical transaction in its client
  std::size_t attempt = 0;
  std::string uuid;
  std::size_t node = 0;
  Mode mode = Mode::shim;
  std::vector<OpRecord> ops;
  bool committed = false;
  std::optional<TransactionId> commit_tid;
  std::string outcome;  // "committed" or an error code name
};

struct OpLog {
  std::vector<TxnLog> txns;
};

struct Anomalies {
  std::size_t ryw = 0;
  std::size_t fr = 0;
  std::size_t wrong_value = 0;
};

/// Per transaction attempt: RYW when a read of a key the attempt already
/// wrote does not return its latest own write; FR when external reads
/// repeat with different versions or a read version's cowritten key was
/// read at an older version (NULL being oldest). wrong_value counts reads
/// whose bytes belong to a different key or writer than reported.
Anomalies count_anomalies(const OpLog& log);

struct Metrics {
  double elapsed_s = 0;
  std::size_t committed = 0;
  std::size_t failed = 0;  // logical transactions that ran out of retries
  std::size_t retries = 0;
  std::size_t not_readable = 0;
  std::size_t other_errors = 0;
  double throughput_tps = 0;
  double p50_ms = 0;
  double p99_ms = 0;
};

struct WorkloadResult {
  OpLog log;
  Metrics metrics;
  Anomalies anomalies;
};

/// Runs spec.clients concurrent clients. Shim transactions are routed
/// round-robin and stay on one node. A not_readable error aborts and
/// retries with fresh reads; an unavailable node makes the client redo the
/// transaction under the same uuid on the next node.
WorkloadResult run_workload(const WorkloadSpec& spec, Cluster& cluster);

double percentile(std::vector<double> samples, double p);

}  // namespace aft::harness
