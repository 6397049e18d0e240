#include "aft/caches.hpp"

namespace aft {

std::string DataCache::cache_key(const std::string& key, const TransactionId& tid) {
  std::string out = key;
  out.push_back('\0');
  out += encode_tid_suffix(tid);
  return out;
}

std::optional<Bytes> DataCache::get(const std::string& key, const TransactionId& tid) {
  std::lock_guard lock(mu_);
  auto it = map_.find(cache_key(key, tid));
  if (it == map_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->value;
}

void DataCache::put(const std::string& key, const TransactionId& tid, const Bytes& value) {
  if (value.size() > capacity_) return;
  std::lock_guard lock(mu_);
  auto ck = cache_key(key, tid);
  if (auto it = map_.find(ck); it != map_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front(Entry{ck, value});
  map_.emplace(std::move(ck), lru_.begin());
  bytes_ += value.size();
  while (bytes_ > capacity_ && !lru_.empty()) evict_locked(map_.find(lru_.back().cache_key));
}

void DataCache::evict(const std::string& key, const TransactionId& tid) {
  std::lock_guard lock(mu_);
  auto it = map_.find(cache_key(key, tid));
  if (it != map_.end()) evict_locked(it);
}

void DataCache::evict_locked(std::unordered_map<std::string, std::list<Entry>::iterator>::iterator it) {
  bytes_ -= it->second->value.size();
  lru_.erase(it->second);
  map_.erase(it);
}

std::size_t DataCache::bytes() const {
  std::lock_guard lock(mu_);
  return bytes_;
}

std::size_t DataCache::entries() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

void ReadRegistry::add(const TransactionId& source, const Uuid& reader) {
  std::lock_guard lock(mu_);
  readers_[source].insert(reader);
}

void ReadRegistry::release(const Uuid& reader, const std::set<TransactionId>& sources) {
  std::lock_guard lock(mu_);
  for (const auto& source : sources) {
    auto it = readers_.find(source);
    if (it == readers_.end()) continue;
    it->second.erase(reader);
    if (it->second.empty()) readers_.erase(it);
  }
}

bool ReadRegistry::has_readers(const TransactionId& source) const {
  std::lock_guard lock(mu_);
  return readers_.contains(source);
}

std::size_t ReadRegistry::size() const {
  std::lock_guard lock(mu_);
  return readers_.size();
}

}  // namespace aft
