// Transaction manager: sessions, the commit protocol, atomic reads with
// read-your-writes and repeatable read, the commit index, and bootstrap.
#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aft/caches.hpp"
#include "aft/clock.hpp"
#include "aft/commit_index.hpp"
#include "aft/storage.hpp"
#include "aft/transaction_id.hpp"
#include "aft/write_buffer.hpp"

namespace aft {

struct TxnManagerConfig {
  std::string node_id = "node-0";
  // idle time, in clock units, after which a session is aborted
  std::uint64_t txn_timeout = 60'000;
  std::size_t spill_threshold = kDefaultSpillThreshold;
  std::size_t data_cache_bytes = kDefaultDataCacheBytes;
  std::size_t bootstrap_limit = 10'000;
  // fixed seed for uuid generation; random_device when unset
  std::optional<std::uint64_t> uuid_seed;
};

/// Read-set marker for "this transaction observed the NULL version of the
/// key". It orders before every real transaction id.
inline constexpr TransactionId kNullVersion{};

struct ReadResult {
  std::optional<Bytes> value;
  // Version the value came from. Empty for own writes and NULL reads.
  std::optional<TransactionId> version;
  KeySet cowritten;
  bool own_write = false;
};

class TxnManager {
 public:
  TxnManager(TxnManagerConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<Clock> clock);
  ~TxnManager();

  TxnManager(const TxnManager&) = delete;
  TxnManager& operator=(const TxnManager&) = delete;

  const TxnManagerConfig& config() const noexcept { return config_; }
  const std::string& node_id() const noexcept { return config_.node_id; }
  Backend& backend() noexcept { return *backend_; }
  Clock& clock() noexcept { return *clock_; }

  // --- client API ---------------------------------------------------------

  /// Registers a running session. Passing a uuid continues an existing live
  /// session on this node, or starts a retry of a transaction that may
  /// already have committed elsewhere (checked at commit).
  PendingTxnHandle start_transaction(std::optional<Uuid> reuse = std::nullopt);
  void put(const Uuid& txn, const std::string& key, Bytes value);
  /// Own writes first, then the version already read, then an atomic read.
  /// Throws not_readable when versions exist but none is compatible.
  ReadResult get(const Uuid& txn, const std::string& key);
  /// Data first, then the commit record, then visibility. A storage failure
  /// before the record is durable leaves the session running so the same
  /// uuid can retry.
  TransactionId commit_transaction(const Uuid& txn);
  /// Idempotent; unknown transactions are acknowledged.
  void abort_transaction(const Uuid& txn);
  std::vector<Uuid> expire_stale_sessions(std::uint64_t now);

  // --- metadata -----------------------------------------------------------

  /// Idempotent index insert; skips locally deleted and superseded records.
  /// Returns whether the record was added.
  bool record_committed(const CommitRecord& record);
  /// Warms the index from the newest commit records in storage.
  void bootstrap();

  bool is_superseded(const CommitRecord& record) const;
  /// Records committed here since the previous call, oldest first.
  std::vector<CommitRecord> take_recent_commits();

  std::vector<TransactionId> run_local_gc();
  /// The subset of `candidates` this node has dropped (or will never index).
  std::vector<TransactionId> answer_gc_candidates(const std::vector<CommitRecord>& candidates);
  std::size_t flush_deletions();

  std::vector<Uuid> live_transactions() const;
  std::size_t session_count() const;
  std::size_t index_size() const;
  CommitIndex index_snapshot() const;
  const DataCache& data_cache() const noexcept { return cache_; }
  const ReadRegistry& read_registry() const noexcept { return registry_; }
  std::optional<ReadSet> read_set(const Uuid& txn) const;

  // --- fault injection ----------------------------------------------------

  /// Points: "during_spill", "after_data_write", "after_commit_record".
  void set_crash_hook(CrashHook hook);
  bool crashed() const noexcept { return crashed_.load(); }
  /// Emulates a process kill: every later call fails with `unavailable`.
  void mark_crashed() noexcept { crashed_.store(true); }

 private:
  struct Session;

  std::shared_ptr<Session> find_session(const Uuid& txn) const;
  void ensure_alive() const;
  std::uint64_t next_timestamp();
  Bytes fetch_version(const std::string& key, const TransactionId& tid);
  std::optional<CommitRecord> find_existing_commit(Session& session);
  void finish_session(Session& session);
  void crash_point(std::string_view point);
  bool record_committed_locked(const CommitRecord& record);

  TxnManagerConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<Clock> clock_;
  std::atomic<bool> crashed_{false};

  mutable std::mutex sessions_mu_;
  std::map<Uuid, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;

  mutable std::shared_mutex index_mu_;
  CommitIndex index_;
  ReadRegistry registry_;
  DataCache cache_;

  std::mutex ts_mu_;
  std::uint64_t last_ts_ = 0;

  std::mutex recent_mu_;
  std::vector<CommitRecord> recent_;

  std::mutex deletions_mu_;
  std::vector<std::string> pending_deletions_;

  std::mutex hook_mu_;
  CrashHook crash_hook_;
};

}  // namespace aft
