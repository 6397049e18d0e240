// Data cache and read registry: the two pieces of per-node state that sit
// beside the commit index.
#pragma once

#include <cstddef>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>

#include "aft/transaction_id.hpp"

namespace aft {

inline constexpr std::size_t kDefaultDataCacheBytes = 64u << 20;

/// LRU over committed versions, bounded by the bytes of cached values.
class DataCache {
 public:
  explicit DataCache(std::size_t capacity_bytes = kDefaultDataCacheBytes) : capacity_(capacity_bytes) {}

  std::optional<Bytes> get(const std::string& key, const TransactionId& tid);
  void put(const std::string& key, const TransactionId& tid, const Bytes& value);
  void evict(const std::string& key, const TransactionId& tid);

  std::size_t bytes() const;
  std::size_t entries() const;
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  struct Entry {
    std::string cache_key;
    Bytes value;
  };

  static std::string cache_key(const std::string& key, const TransactionId& tid);
  void evict_locked(std::unordered_map<std::string, std::list<Entry>::iterator>::iterator it);

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> map_;
  std::size_t bytes_ = 0;
};

/// Which running transactions have read from which committed transaction.
/// A source with live readers must not be garbage collected locally.
class ReadRegistry {
 public:
  void add(const TransactionId& source, const Uuid& reader);
  void release(const Uuid& reader, const std::set<TransactionId>& sources);
  bool has_readers(const TransactionId& source) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<TransactionId, std::set<Uuid>> readers_;
};

}  // namespace aft
