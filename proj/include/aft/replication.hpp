// Commit-set multicast between nodes, with supersedence pruning.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "aft/transaction_id.hpp"

namespace aft {

class TxnManager;

inline constexpr std::uint64_t kDefaultMulticastIntervalMs = 1000;

struct CommitBatch {
  std::string origin;
  std::uint64_t sequence = 0;
  std::vector<CommitRecord> records;
};

class Replicator {
 public:
  explicit Replicator(TxnManager& txn, bool prune = true) : txn_(txn), prune_(prune) {}

  struct Outgoing {
    CommitBatch peers;          // pruned unless pruning is disabled
    CommitBatch fault_manager;  // always unpruned
  };

  /// Drains commits made on this node since the previous call. An empty
  /// batch is still produced and advances the sequence.
  Outgoing collect_broadcast();

  /// Merges records that are neither locally deleted nor superseded here.
  /// Returns how many were merged.
  std::size_t merge_remote(const CommitBatch& batch);

  bool pruning() const noexcept { return prune_; }
  std::uint64_t last_sequence_from(const std::string& origin) const;

 private:
  TxnManager& txn_;
  bool prune_;
  mutable std::mutex mu_;
  std::uint64_t sequence_ = 0;
  std::map<std::string, std::uint64_t> seen_;
};

}  // namespace aft
