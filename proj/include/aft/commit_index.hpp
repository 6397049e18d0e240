// Commit Set Cache and key-version index, plus the two algorithms that run
// over it: atomic reads and supersedence.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aft/transaction_id.hpp"

namespace aft {

/// What a transaction has read so far: one version per key together with
/// that version's cowritten set.
struct ReadEntry {
  TransactionId tid;
  KeySet cowritten;

  bool operator==(const ReadEntry&) const = default;
};
using ReadSet = std::map<std::string, ReadEntry, std::less<>>;

/// Committed records this node knows about and, per key, the ascending list
/// of transactions that wrote it. Not synchronized; TxnManager guards it.
///
/// Invariant: versions[k] contains t iff records[t].writeset contains k, and
/// every versions list is strictly increasing.
class CommitIndex {
 public:
  /// False when the record is already present.
  bool insert(const CommitRecord& record);
  /// Drops the record and its versions and remembers the tid as locally
  /// deleted. False when absent.
  bool erase(const TransactionId& tid);
  /// Same as erasing each tid in turn, with one pass over each affected
  /// version list. Returns the tids that were present.
  std::vector<TransactionId> erase_all(std::span<const TransactionId> tids);

  bool contains(const TransactionId& tid) const { return records_.contains(tid); }
  const CommitRecord* find(const TransactionId& tid) const;
  std::span<const TransactionId> versions(std::string_view key) const;
  std::optional<TransactionId> latest(std::string_view key) const;

  bool is_locally_deleted(const TransactionId& tid) const { return locally_deleted_.contains(tid); }
  void mark_locally_deleted(const TransactionId& tid) { locally_deleted_.insert(tid); }
  const std::set<TransactionId>& locally_deleted() const noexcept { return locally_deleted_; }

  const std::map<TransactionId, CommitRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t key_count() const noexcept { return versions_.size(); }

  /// Full invariant check; linear in the index size.
  bool is_consistent() const;

 private:
  std::map<TransactionId, CommitRecord> records_;
  std::unordered_map<std::string, std::vector<TransactionId>> versions_;
  std::set<TransactionId> locally_deleted_;
};

/// Newest version of `key` whose addition keeps `read_set` an Atomic
/// Readset, or nullopt (the NULL version) when none qualifies.
///
/// lower = newest tid in the read set whose cowritten set names `key`;
/// candidates at or above it are tried newest-first, and a candidate t is
/// rejected when some key it cowrote was already read at a version older
/// than t.
std::optional<TransactionId> atomic_read(std::string_view key, const ReadSet& read_set, const CommitIndex& index);

/// True when every key the record wrote has a strictly newer version in the
/// index. For an indexed record this is exactly "no key's latest version is
/// the record's own".
bool is_superseded(const CommitRecord& record, const CommitIndex& index);

}  // namespace aft
