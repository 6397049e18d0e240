// Identifiers, versions, commit records, and the storage-key encoding.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>

namespace aft {

using Bytes = std::string;
using KeySet = std::set<std::string>;

/// 128-bit transaction identifier. Ordering is byte-lexicographic, which is
/// the same as comparing the 32-char lowercase hex renderings.
class Uuid {
 public:
  static constexpr std::size_t kSize = 16;

  Uuid() = default;
  explicit Uuid(const std::array<std::uint8_t, kSize>& bytes) : bytes_(bytes) {}

  /// Throws Error(invalid_argument) unless `hex` is exactly 32 hex digits.
  static Uuid from_hex(std::string_view hex);
  static Uuid random(std::mt19937_64& rng);

  std::string hex() const;
  const std::array<std::uint8_t, kSize>& bytes() const noexcept { return bytes_; }

  auto operator<=>(const Uuid&) const = default;

 private:
  std::array<std::uint8_t, kSize> bytes_{};
};

/// The <commit timestamp, uuid> pair. Timestamp dominates; ties fall back to
/// the uuid order.
struct TransactionId {
  std::uint64_t timestamp = 0;
  Uuid uuid;

  auto operator<=>(const TransactionId&) const = default;
};

std::strong_ordering compare_tids(const TransactionId& a, const TransactionId& b);
std::string to_string(const TransactionId& tid);

struct PendingTxnHandle {
  Uuid uuid;
  std::uint64_t start_time = 0;
};

/// One immutable version of a key. `cowritten` is the full write set of the
/// transaction that produced it.
struct KeyVersion {
  std::string key;
  TransactionId tid;
  KeySet cowritten;
  Bytes value;
};

struct CommitRecord {
  TransactionId tid;
  KeySet writeset;

  bool operator==(const CommitRecord&) const = default;
};

// --- storage key encoding -------------------------------------------------
//
//   data/{key}/{timestamp:020}-{uuid}
//   commit/{timestamp:020}-{uuid}
//
// Twenty zero-padded digits make byte order equal numeric order, so a prefix
// listing returns versions and commit records chronologically.

inline constexpr std::string_view kDataPrefix = "data/";
inline constexpr std::string_view kCommitPrefix = "commit/";

/// Keys must be nonempty and free of '/'.
bool is_valid_key(std::string_view key) noexcept;
void validate_key(std::string_view key);

std::string encode_tid_suffix(const TransactionId& tid);
TransactionId decode_tid_suffix(std::string_view suffix);

std::string encode_data_key(std::string_view key, const TransactionId& tid);
std::string data_key_prefix(std::string_view key);
std::pair<std::string, TransactionId> decode_data_key(std::string_view storage_key);

std::string encode_commit_key(const TransactionId& tid);
TransactionId decode_commit_key(std::string_view storage_key);

/// Spill locations reuse the data namespace with timestamp 0, which no
/// committed transaction can carry.
std::string encode_spill_key(std::string_view key, const Uuid& uuid);
inline bool is_provisional(const TransactionId& tid) noexcept { return tid.timestamp == 0; }

/// Commit record payload stored under encode_commit_key: the same JSON shape
/// as a wire record, {"ts":..,"uuid":..,"writeset":[..]}.
Bytes encode_commit_value(const CommitRecord& record);
CommitRecord decode_commit_value(std::string_view payload);

}  // namespace aft
