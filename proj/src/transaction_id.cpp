#include "aft/transaction_id.hpp"

#include <charconv>
#include <cstdio>

#include "aft/error.hpp"
#include "aft/json_codec.hpp"

namespace aft {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";
constexpr std::size_t kTimestampDigits = 20;
// "{20 digits}-{32 hex}"
constexpr std::size_t kSuffixSize = kTimestampDigits + 1 + 2 * Uuid::kSize;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

Uuid Uuid::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kSize) {
    throw Error(ErrorCode::invalid_argument, "uuid must be 32 lowercase hex chars: " + std::string(hex));
  }
  std::array<std::uint8_t, kSize> bytes{};
  for (std::size_t i = 0; i < kSize; ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::invalid_argument, "uuid must be 32 lowercase hex chars: " + std::string(hex));
    }
    bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return Uuid(bytes);
}

Uuid Uuid::random(std::mt19937_64& rng) {
  std::array<std::uint8_t, kSize> bytes{};
  for (std::size_t i = 0; i < kSize; i += 8) {
    std::uint64_t word = rng();
    for (std::size_t b = 0; b < 8; ++b) bytes[i + b] = static_cast<std::uint8_t>(word >> (8 * b));
  }
  return Uuid(bytes);
}

std::string Uuid::hex() const {
  std::string out(2 * kSize, '0');
  for (std::size_t i = 0; i < kSize; ++i) {
    out[2 * i] = kHexDigits[bytes_[i] >> 4];
    out[2 * i + 1] = kHexDigits[bytes_[i] & 0xf];
  }
  return out;
}

std::strong_ordering compare_tids(const TransactionId& a, const TransactionId& b) { return a <=> b; }

std::string to_string(const TransactionId& tid) { return encode_tid_suffix(tid); }

bool is_valid_key(std::string_view key) noexcept {
  return !key.empty() && key.find('/') == std::string_view::npos;
}

void validate_key(std::string_view key) {
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "key must be nonempty");
  if (key.find('/') != std::string_view::npos) {
    throw Error(ErrorCode::invalid_argument, "key contains reserved delimiter '/': " + std::string(key));
  }
}

std::string encode_tid_suffix(const TransactionId& tid) {
  char digits[kTimestampDigits + 1];
  std::snprintf(digits, sizeof(digits), "%020llu", static_cast<unsigned long long>(tid.timestamp));
  std::string out;
  out.reserve(kSuffixSize);
  out.append(digits, kTimestampDigits);
  out.push_back('-');
  out.append(tid.uuid.hex());
  return out;
}

TransactionId decode_tid_suffix(std::string_view suffix) {
  if (suffix.size() != kSuffixSize || suffix[kTimestampDigits] != '-') {
    throw Error(ErrorCode::invalid_argument, "malformed transaction id: " + std::string(suffix));
  }
  TransactionId tid;
  auto digits = suffix.substr(0, kTimestampDigits);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), tid.timestamp);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
    throw Error(ErrorCode::invalid_argument, "malformed timestamp: " + std::string(suffix));
  }
  tid.uuid = Uuid::from_hex(suffix.substr(kTimestampDigits + 1));
  return tid;
}

std::string data_key_prefix(std::string_view key) {
  std::string out(kDataPrefix);
  out.append(key);
  out.push_back('/');
  return out;
}

std::string encode_data_key(std::string_view key, const TransactionId& tid) {
  validate_key(key);
  return data_key_prefix(key) + encode_tid_suffix(tid);
}

std::pair<std::string, TransactionId> decode_data_key(std::string_view storage_key) {
  if (!storage_key.starts_with(kDataPrefix)) {
    throw Error(ErrorCode::invalid_argument, "not a data key: " + std::string(storage_key));
  }
  auto rest = storage_key.substr(kDataPrefix.size());
  auto slash = rest.find('/');
  if (slash == std::string_view::npos || slash == 0) {
    throw Error(ErrorCode::invalid_argument, "not a data key: " + std::string(storage_key));
  }
  return {std::string(rest.substr(0, slash)), decode_tid_suffix(rest.substr(slash + 1))};
}

std::string encode_commit_key(const TransactionId& tid) {
  return std::string(kCommitPrefix) + encode_tid_suffix(tid);
}

TransactionId decode_commit_key(std::string_view storage_key) {
  if (!storage_key.starts_with(kCommitPrefix)) {
    throw Error(ErrorCode::invalid_argument, "not a commit key: " + std::string(storage_key));
  }
  return decode_tid_suffix(storage_key.substr(kCommitPrefix.size()));
}

std::string encode_spill_key(std::string_view key, const Uuid& uuid) {
  return encode_data_key(key, TransactionId{0, uuid});
}

Bytes encode_commit_value(const CommitRecord& record) { return json(record).dump(); }

CommitRecord decode_commit_value(std::string_view payload) {
  try {
    return json::parse(payload).get<CommitRecord>();
  } catch (const json::exception& e) {
    throw StorageError(std::string("corrupt commit record: ") + e.what());
  }
}

}  // namespace aft
