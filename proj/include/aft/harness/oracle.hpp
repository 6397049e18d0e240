// Brute-force reference for atomic reads, used to check the index-based
// algorithm.
#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "aft/commit_index.hpp"

namespace aft::harness {

/// True when every pair of entries satisfies the read-atomic condition: if
/// x was read from T and T also wrote y, the version of y in the set is not
/// older than T.
bool is_atomic_readset(const ReadSet& reads);

/// Newest committed version of `key` in `history` whose addition to `reads`
/// keeps it an atomic readset, found by trying every version. nullopt when
/// none qualifies.
std::optional<TransactionId> oracle_atomic_read(std::string_view key, const ReadSet& reads,
                                                const std::vector<CommitRecord>& history);

}  // namespace aft::harness
