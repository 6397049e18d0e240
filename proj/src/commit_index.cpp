#include "aft/commit_index.hpp"

#include <algorithm>

namespace aft {

bool CommitIndex::insert(const CommitRecord& record) {
  auto [it, inserted] = records_.emplace(record.tid, record);
  if (!inserted) return false;
  for (const auto& key : record.writeset) {
    auto& list = versions_[key];
    // commits usually arrive roughly in order, so this is an append
    auto pos = std::lower_bound(list.begin(), list.end(), record.tid);
    list.insert(pos, record.tid);
  }
  return true;
}

bool CommitIndex::erase(const TransactionId& tid) {
  auto it = records_.find(tid);
  if (it == records_.end()) return false;
  for (const auto& key : it->second.writeset) {
    auto vit = versions_.find(key);
    if (vit == versions_.end()) continue;
    auto& list = vit->second;
    auto pos = std::lower_bound(list.begin(), list.end(), tid);
    if (pos != list.end() && *pos == tid) list.erase(pos);
    if (list.empty()) versions_.erase(vit);
  }
  records_.erase(it);
  locally_deleted_.insert(tid);
  return true;
}

std::vector<TransactionId> CommitIndex::erase_all(std::span<const TransactionId> tids) {
  std::vector<TransactionId> erased;
  std::set<std::string, std::less<>> touched;
  for (const auto& tid : tids) {
    auto it = records_.find(tid);
    if (it == records_.end()) continue;
    touched.insert(it->second.writeset.begin(), it->second.writeset.end());
    records_.erase(it);
    locally_deleted_.insert(tid);
    erased.push_back(tid);
  }
  for (const auto& key : touched) {
    auto vit = versions_.find(key);
    if (vit == versions_.end()) continue;
    auto& list = vit->second;
    std::erase_if(list, [&](const TransactionId& t) { return !records_.contains(t); });
    if (list.empty()) versions_.erase(vit);
  }
  return erased;
}

const CommitRecord* CommitIndex::find(const TransactionId& tid) const {
  auto it = records_.find(tid);
  return it == records_.end() ? nullptr : &it->second;
}

std::span<const TransactionId> CommitIndex::versions(std::string_view key) const {
  auto it = versions_.find(std::string(key));
  if (it == versions_.end()) return {};
  return it->second;
}

std::optional<TransactionId> CommitIndex::latest(std::string_view key) const {
  auto list = versions(key);
  if (list.empty()) return std::nullopt;
  return list.back();
}

bool CommitIndex::is_consistent() const {
  std::size_t total = 0;
  for (const auto& [key, list] : versions_) {
    if (list.empty()) return false;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i > 0 && !(list[i - 1] < list[i])) return false;
      auto rec = records_.find(list[i]);
      if (rec == records_.end() || !rec->second.writeset.contains(key)) return false;
    }
    total += list.size();
  }
  std::size_t expected = 0;
  for (const auto& [tid, record] : records_) {
    if (record.tid != tid) return false;
    expected += record.writeset.size();
  }
  return total == expected;
}

std::optional<TransactionId> atomic_read(std::string_view key, const ReadSet& read_set, const CommitIndex& index) {
  std::optional<TransactionId> lower;
  for (const auto& [read_key, entry] : read_set) {
    if (entry.cowritten.contains(std::string(key)) && (!lower || *lower < entry.tid)) lower = entry.tid;
  }

  auto versions = index.versions(key);
  if (versions.empty()) return std::nullopt;

  auto first = lower ? std::lower_bound(versions.begin(), versions.end(), *lower) : versions.begin();
  for (auto it = versions.end(); it != first;) {
    --it;
    const CommitRecord* record = index.find(*it);
    if (record == nullptr) continue;
    bool valid = true;
    for (const auto& cowritten : record->writeset) {
      auto read = read_set.find(cowritten);
      if (read != read_set.end() && read->second.tid < *it) {
        valid = false;
        break;
      }
    }
    if (valid) return *it;
  }
  return std::nullopt;
}

bool is_superseded(const CommitRecord& record, const CommitIndex& index) {
  for (const auto& key : record.writeset) {
    auto latest = index.latest(key);
    if (!latest || !(record.tid < *latest)) return false;
  }
  return true;
}

}  // namespace aft
