#include "aft/harness/oracle.hpp"

#include <algorithm>

namespace aft::harness {

bool is_atomic_readset(const ReadSet& reads) {
  for (const auto& [key, entry] : reads) {
    for (const auto& other : entry.cowritten) {
      if (other == key) continue;
      auto it = reads.find(other);
      if (it != reads.end() && it->second.tid < entry.tid) return false;
    }
  }
  return true;
}

std::optional<TransactionId> oracle_atomic_read(std::string_view key, const ReadSet& reads,
                                                const std::vector<CommitRecord>& history) {
  std::vector<const CommitRecord*> writers;
  for (const auto& record : history) {
    if (record.writeset.contains(std::string(key))) writers.push_back(&record);
  }
  std::sort(writers.begin(), writers.end(), [](auto* a, auto* b) { return a->tid > b->tid; });
  for (const auto* writer : writers) {
    ReadSet extended = reads;
    extended.insert_or_assign(std::string(key), ReadEntry{writer->tid, writer->writeset});
    if (is_atomic_readset(extended)) return writer->tid;
  }
  return std::nullopt;
}

}  // namespace aft::harness
