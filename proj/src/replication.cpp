#include "aft/replication.hpp"

#include <algorithm>

#include "aft/txn_manager.hpp"

namespace aft {

Replicator::Outgoing Replicator::collect_broadcast() {
  auto recent = txn_.take_recent_commits();
  Outgoing out;
  {
    std::lock_guard lock(mu_);
    ++sequence_;
    out.peers.sequence = out.fault_manager.sequence = sequence_;
  }
  out.peers.origin = out.fault_manager.origin = txn_.node_id();
  for (const auto& record : recent) {
    if (!prune_ || !txn_.is_superseded(record)) out.peers.records.push_back(record);
  }
  out.fault_manager.records = std::move(recent);
  return out;
}

std::size_t Replicator::merge_remote(const CommitBatch& batch) {
  {
    std::lock_guard lock(mu_);
    auto& seen = seen_[batch.origin];
    seen = std::max(seen, batch.sequence);
  }
  std::size_t merged = 0;
  for (const auto& record : batch.records) {
    if (txn_.record_committed(record)) ++merged;
  }
  return merged;
}

std::uint64_t Replicator::last_sequence_from(const std::string& origin) const {
  std::lock_guard lock(mu_);
  auto it = seen_.find(origin);
  return it == seen_.end() ? 0 : it->second;
}

}  // namespace aft
