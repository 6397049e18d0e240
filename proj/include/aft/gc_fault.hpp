// Local metadata GC, the global data GC, and the fault manager's recovery
// scan. The global GC and the fault manager share one coordinator.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "aft/caches.hpp"
#include "aft/clock.hpp"
#include "aft/commit_index.hpp"
#include "aft/replication.hpp"
#include "aft/storage.hpp"

namespace aft {

/// Oldest-first pass over the index dropping every superseded record that no
/// running transaction has read from. Dropped tids become locally deleted
/// and their cached values are evicted.
std::vector<TransactionId> local_gc_sweep(CommitIndex& index, const ReadRegistry& registry, DataCache* cache);

/// Node-side answer to a GC proposal: candidates already locally deleted,
/// plus candidates never indexed here that the local index supersedes (those
/// are marked locally deleted so a late broadcast cannot resurrect them).
std::vector<TransactionId> answer_gc_candidates(CommitIndex& index, const std::vector<CommitRecord>& candidates);

/// Proposal for one GC round. Candidates carry their write sets so a node
/// that never indexed one can still decide whether it is superseded.
struct GcCandidateSet {
  std::uint64_t round = 0;
  std::vector<CommitRecord> candidates;
};

struct GcAck {
  std::string node;
  std::uint64_t round = 0;
  std::vector<TransactionId> deleted;
};

/// How the coordinator reaches one node. Implementations throw on an
/// unreachable node.
class NodeLink {
 public:
  virtual ~NodeLink() = default;
  virtual std::string id() const = 0;
  virtual GcAck gc_candidates(const GcCandidateSet& candidates) = 0;
  virtual void fault_notify(const std::vector<CommitRecord>& records) = 0;
  virtual std::vector<Uuid> live_transactions() = 0;
};

struct CoordinatorConfig {
  std::uint64_t gc_interval_ms = 5000;
  std::uint64_t fault_scan_interval_ms = 5000;
  std::size_t deletion_workers = 1;
  // clock units a suspected orphan must stay orphaned before deletion
  std::uint64_t orphan_age = 600'000;
  // upper bound on tids proposed per GC round
  std::size_t max_candidates_per_round = 100'000;
};

/// Global GC plus fault manager. Receives every node's unpruned commit
/// stream; everything else it learns by scanning storage, so a restarted
/// coordinator only needs to rescan.
class Coordinator {
 public:
  Coordinator(CoordinatorConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<Clock> clock);
  ~Coordinator();

  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  void set_nodes(std::vector<std::shared_ptr<NodeLink>> nodes);

  /// Unpruned batch from a node's broadcaster.
  void on_commit_batch(const CommitBatch& batch);

  /// Commit records in storage the coordinator has not heard about; each is
  /// added to the ledger and pushed to every node.
  std::vector<CommitRecord> fault_scan();

  /// One proposal round. Returns the tids whose deletion was scheduled:
  /// those every node reported as locally deleted.
  std::vector<TransactionId> global_gc_round();

  /// Deletes provisional spill keys and uncommitted data keys that have
  /// looked orphaned for at least orphan_age. `now` is a clock reading.
  std::vector<std::string> orphan_sweep(std::uint64_t now);

  /// Blocks until every scheduled deletion has finished.
  void wait_for_deletions();

  std::size_t ledger_size() const;
  bool in_ledger(const TransactionId& tid) const;
  std::uint64_t round() const;
  std::uint64_t deleted_count() const;

 private:
  struct DeletionJob {
    CommitRecord record;
  };

  void deletion_worker(std::stop_token stop);
  void add_to_ledger_locked(const CommitRecord& record);

  CoordinatorConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<Clock> clock_;

  mutable std::mutex mu_;
  std::vector<std::shared_ptr<NodeLink>> nodes_;
  // records heard about and not yet deleted; its locally-deleted set is the
  // set of globally deleted transactions
  CommitIndex ledger_;
  std::map<TransactionId, std::uint64_t> recovered_in_round_;
  std::map<std::string, std::uint64_t> orphan_first_seen_;
  std::uint64_t round_ = 0;
  std::uint64_t deleted_ = 0;

  std::mutex jobs_mu_;
  std::condition_variable_any jobs_cv_;
  std::condition_variable idle_cv_;
  std::deque<DeletionJob> jobs_;
  std::size_t jobs_in_flight_ = 0;
  std::vector<std::jthread> workers_;
};

}  // namespace aft
