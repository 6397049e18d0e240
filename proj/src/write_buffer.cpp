#include "aft/write_buffer.hpp"

#include "aft/error.hpp"

namespace aft {

std::string_view to_string(TxnStatus status) {
  switch (status) {
    case TxnStatus::running: return "running";
    case TxnStatus::committing: return "committing";
    case TxnStatus::committed: return "committed";
    case TxnStatus::aborted: return "aborted";
  }
  return "unknown";
}

BufferedTxn::BufferedTxn(PendingTxnHandle handle, std::shared_ptr<Backend> backend, std::size_t spill_threshold,
                         DeletionSink deletions, CrashHook crash_hook)
    : handle_(handle),
      backend_(std::move(backend)),
      spill_threshold_(spill_threshold),
      deletions_(std::move(deletions)),
      crash_hook_(std::move(crash_hook)) {}

void BufferedTxn::require_running(std::string_view op) const {
  if (status_ != TxnStatus::running) {
    throw Error(ErrorCode::not_running,
                std::string(op) + " on transaction " + handle_.uuid.hex() + " which is " + std::string(to_string(status_)));
  }
}

void BufferedTxn::put(const std::string& key, Bytes value) {
  require_running("put");
  validate_key(key);
  auto it = updates_.find(key);
  if (it != updates_.end()) {
    bytes_buffered_ -= key.size() + it->second.size();
    bytes_buffered_ += key.size() + value.size();
    it->second = std::move(value);
  } else {
    bytes_buffered_ += key.size() + value.size();
    updates_.emplace(key, std::move(value));
  }
  if (bytes_buffered_ >= spill_threshold_) {
    try {
      spill();
    } catch (const StorageError&) {
      // the put itself succeeded; the next put retries the spill
    }
  }
}

std::optional<Bytes> BufferedTxn::read_own_write(const std::string& key) const {
  if (auto it = updates_.find(key); it != updates_.end()) return it->second;
  if (auto it = spilled_.find(key); it != spilled_.end()) {
    auto value = backend_->get(it->second);
    if (!value) throw StorageError("spilled value missing at " + it->second);
    return value;
  }
  return std::nullopt;
}

bool BufferedTxn::wrote(const std::string& key) const { return updates_.contains(key) || spilled_.contains(key); }

void BufferedTxn::spill() {
  require_running("spill");
  if (updates_.empty() || bytes_buffered_ < spill_threshold_) {
    throw Error(ErrorCode::invalid_argument, "spill requires bytes_buffered >= spill_threshold");
  }
  std::vector<StorageEntry> entries;
  entries.reserve(updates_.size());
  for (const auto& [key, value] : updates_) entries.push_back({encode_spill_key(key, handle_.uuid), value});
  backend_->put_batch(entries);
  if (crash_hook_) crash_hook_("during_spill");
  for (auto& entry : entries) {
    auto key = decode_data_key(entry.key).first;
    spilled_.insert_or_assign(std::move(key), std::move(entry.key));
  }
  updates_.clear();
  bytes_buffered_ = 0;
}

std::vector<DrainedWrite> BufferedTxn::drain_for_commit() {
  require_running("commit");
  std::vector<DrainedWrite> out;
  out.reserve(updates_.size() + spilled_.size());
  for (const auto& [key, location] : spilled_) {
    if (!updates_.contains(key)) out.push_back({key, SpillLocation{location}});
  }
  for (const auto& [key, value] : updates_) out.push_back({key, value});
  status_ = TxnStatus::committing;
  return out;
}

void BufferedTxn::reopen() {
  if (status_ == TxnStatus::committing) status_ = TxnStatus::running;
}

void BufferedTxn::mark_committed() {
  status_ = TxnStatus::committed;
  updates_.clear();
  bytes_buffered_ = 0;
  // provisional copies are dead once the final versions exist
  if (!spilled_.empty() && deletions_) deletions_(spill_keys());
  spilled_.clear();
}

void BufferedTxn::discard() {
  if (status_ == TxnStatus::aborted) return;
  status_ = TxnStatus::aborted;
  updates_.clear();
  bytes_buffered_ = 0;
  if (!spilled_.empty() && deletions_) deletions_(spill_keys());
  spilled_.clear();
}

std::vector<std::string> BufferedTxn::spill_keys() const {
  std::vector<std::string> out;
  out.reserve(spilled_.size());
  for (const auto& [key, location] : spilled_) out.push_back(location);
  return out;
}

}  // namespace aft
