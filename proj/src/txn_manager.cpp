#include "aft/txn_manager.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "aft/error.hpp"
#include "aft/gc_fault.hpp"

namespace aft {

struct TxnManager::Session {
  Session(PendingTxnHandle h, std::shared_ptr<Backend> backend, std::size_t spill_threshold, DeletionSink sink,
          CrashHook hook, bool reused)
      : buffer(h, std::move(backend), spill_threshold, std::move(sink), std::move(hook)),
        last_active(h.start_time),
        reused_uuid(reused) {}

  std::mutex mu;
  BufferedTxn buffer;
  ReadSet reads;
  std::set<TransactionId> sources;
  std::uint64_t last_active;
  bool reused_uuid;
  bool retry_checked = false;
  // tid of a commit attempt whose record write may or may not have landed
  std::optional<TransactionId> ambiguous_attempt;
};

TxnManager::TxnManager(TxnManagerConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      clock_(std::move(clock)),
      rng_(config_.uuid_seed ? *config_.uuid_seed : std::random_device{}()),
      cache_(config_.data_cache_bytes) {
  if (config_.uuid_seed) {
    // distinct nodes sharing a seed must still draw distinct uuids
    std::seed_seq seq(config_.node_id.begin(), config_.node_id.end());
    std::mt19937_64 mix(seq);
    rng_.seed(*config_.uuid_seed ^ mix());
  }
}

TxnManager::~TxnManager() = default;

void TxnManager::ensure_alive() const {
  if (crashed_.load()) throw Error(ErrorCode::unavailable, "node " + config_.node_id + " is down");
}

void TxnManager::set_crash_hook(CrashHook hook) {
  std::lock_guard lock(hook_mu_);
  crash_hook_ = std::move(hook);
}

void TxnManager::crash_point(std::string_view point) {
  CrashHook hook;
  {
    std::lock_guard lock(hook_mu_);
    hook = crash_hook_;
  }
  if (!hook) return;
  try {
    hook(point);
  } catch (const InjectedCrash&) {
    crashed_.store(true);
    throw;
  }
}

std::shared_ptr<TxnManager::Session> TxnManager::find_session(const Uuid& txn) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(txn);
  if (it == sessions_.end()) throw Error(ErrorCode::unknown_txn, "unknown transaction " + txn.hex());
  return it->second;
}

std::uint64_t TxnManager::next_timestamp() {
  auto reading = clock_->now();
  std::lock_guard lock(ts_mu_);
  last_ts_ = std::max(reading, last_ts_ + 1);
  return last_ts_;
}

PendingTxnHandle TxnManager::start_transaction(std::optional<Uuid> reuse) {
  ensure_alive();
  PendingTxnHandle handle;
  if (reuse) {
    handle.uuid = *reuse;
  } else {
    std::lock_guard lock(rng_mu_);
    handle.uuid = Uuid::random(rng_);
  }
  handle.start_time = clock_->now();

  std::lock_guard lock(sessions_mu_);
  if (auto it = sessions_.find(handle.uuid); it != sessions_.end()) {
    return it->second->buffer.handle();
  }
  DeletionSink sink = [this](std::vector<std::string> keys) {
    std::lock_guard dl(deletions_mu_);
    pending_deletions_.insert(pending_deletions_.end(), std::make_move_iterator(keys.begin()),
                              std::make_move_iterator(keys.end()));
  };
  CrashHook hook = [this](std::string_view point) { crash_point(point); };
  sessions_.emplace(handle.uuid, std::make_shared<Session>(handle, backend_, config_.spill_threshold, std::move(sink),
                                                           std::move(hook), reuse.has_value()));
  return handle;
}

void TxnManager::put(const Uuid& txn, const std::string& key, Bytes value) {
  ensure_alive();
  auto session = find_session(txn);
  std::lock_guard lock(session->mu);
  session->last_active = clock_->now();
  try {
    session->buffer.put(key, std::move(value));
  } catch (const InjectedCrash&) {
    crashed_.store(true);
    throw;
  }
}

Bytes TxnManager::fetch_version(const std::string& key, const TransactionId& tid) {
  if (auto cached = cache_.get(key, tid)) return *cached;
  auto value = backend_->get(encode_data_key(key, tid));
  if (!value) {
    throw StorageError("committed version " + to_string(tid) + " of key " + key + " is missing from storage");
  }
  cache_.put(key, tid, *value);
  return *value;
}

ReadResult TxnManager::get(const Uuid& txn, const std::string& key) {
  ensure_alive();
  validate_key(key);
  auto session = find_session(txn);
  std::lock_guard lock(session->mu);
  session->last_active = clock_->now();
  if (session->buffer.status() != TxnStatus::running) {
    throw Error(ErrorCode::not_running, "get on transaction " + txn.hex() + " which is " +
                                            std::string(to_string(session->buffer.status())));
  }

  if (auto own = session->buffer.read_own_write(key)) {
    ReadResult result;
    result.value = std::move(own);
    result.own_write = true;
    return result;
  }

  if (auto it = session->reads.find(key); it != session->reads.end()) {
    ReadResult result;
    if (it->second.tid != kNullVersion) {
      result.version = it->second.tid;
      result.cowritten = it->second.cowritten;
      result.value = fetch_version(key, it->second.tid);
    }
    return result;
  }

  TransactionId chosen;
  KeySet cowritten;
  {
    std::shared_lock ilock(index_mu_);
    auto tid = atomic_read(key, session->reads, index_);
    if (!tid) {
      bool bounded = std::any_of(session->reads.begin(), session->reads.end(),
                                 [&](const auto& kv) { return kv.second.cowritten.contains(key); });
      if (!index_.versions(key).empty() || bounded) {
        throw Error(ErrorCode::not_readable, "no version of " + key + " is compatible with the read set");
      }
      session->reads.emplace(key, ReadEntry{kNullVersion, KeySet{key}});
      return ReadResult{};
    }
    chosen = *tid;
    cowritten = index_.find(chosen)->writeset;
    // registered under the index lock so a concurrent local GC cannot drop
    // the source between the choice and the registration
    registry_.add(chosen, txn);
  }
  session->sources.insert(chosen);
  session->reads.emplace(key, ReadEntry{chosen, cowritten});

  ReadResult result;
  result.version = chosen;
  result.cowritten = std::move(cowritten);
  result.value = fetch_version(key, chosen);
  return result;
}

std::optional<CommitRecord> TxnManager::find_existing_commit(Session& session) {
  const auto& uuid = session.buffer.handle().uuid;
  if (session.ambiguous_attempt) {
    if (auto payload = backend_->get(encode_commit_key(*session.ambiguous_attempt))) {
      return decode_commit_value(*payload);
    }
  }
  if (!session.reused_uuid || session.retry_checked) return std::nullopt;
  {
    std::shared_lock ilock(index_mu_);
    for (const auto& [tid, record] : index_.records()) {
      if (tid.uuid == uuid) return record;
    }
  }
  auto suffix = uuid.hex();
  for (const auto& key : backend_->list_prefix(kCommitPrefix)) {
    if (!key.ends_with(suffix)) continue;
    if (auto payload = backend_->get(key)) return decode_commit_value(*payload);
  }
  session.retry_checked = true;
  return std::nullopt;
}

void TxnManager::finish_session(Session& session) {
  const auto& uuid = session.buffer.handle().uuid;
  registry_.release(uuid, session.sources);
  session.sources.clear();
  std::lock_guard lock(sessions_mu_);
  sessions_.erase(uuid);
}

TransactionId TxnManager::commit_transaction(const Uuid& txn) {
  ensure_alive();
  auto session = find_session(txn);
  std::lock_guard lock(session->mu);
  session->last_active = clock_->now();
  if (session->buffer.status() != TxnStatus::running) {
    throw Error(ErrorCode::not_running, "commit on transaction " + txn.hex() + " which is " +
                                            std::string(to_string(session->buffer.status())));
  }

  try {
    if (auto existing = find_existing_commit(*session)) {
      // an earlier attempt with this uuid already committed: exactly once
      record_committed(*existing);
      session->buffer.drain_for_commit();
      session->buffer.mark_committed();
      finish_session(*session);
      return existing->tid;
    }

    auto writes = session->buffer.drain_for_commit();
    TransactionId tid{next_timestamp(), txn};
    if (writes.empty()) {
      session->buffer.mark_committed();
      finish_session(*session);
      return tid;
    }

    std::vector<StorageEntry> entries;
    CommitRecord record{tid, {}};
    entries.reserve(writes.size());
    try {
      for (auto& write : writes) {
        record.writeset.insert(write.key);
        if (auto* value = std::get_if<Bytes>(&write.value)) {
          entries.push_back({encode_data_key(write.key, tid), std::move(*value)});
        } else {
          const auto& location = std::get<SpillLocation>(write.value).storage_key;
          auto spilled = backend_->get(location);
          if (!spilled) throw StorageError("spilled value missing at " + location);
          entries.push_back({encode_data_key(write.key, tid), std::move(*spilled)});
        }
      }
      backend_->put_batch(entries);
      crash_point("after_data_write");
      session->ambiguous_attempt = tid;
      backend_->put(encode_commit_key(tid), encode_commit_value(record));
      crash_point("after_commit_record");
    } catch (const StorageError&) {
      session->buffer.reopen();
      throw;
    }

    {
      std::unique_lock ilock(index_mu_);
      record_committed_locked(record);
    }
    for (const auto& entry : entries) cache_.put(decode_data_key(entry.key).first, tid, entry.value);
    {
      std::lock_guard rl(recent_mu_);
      recent_.push_back(record);
    }
    session->buffer.mark_committed();
    finish_session(*session);
    return tid;
  } catch (const InjectedCrash&) {
    crashed_.store(true);
    throw;
  }
}

void TxnManager::abort_transaction(const Uuid& txn) {
  ensure_alive();
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(txn);
    if (it == sessions_.end()) return;
    session = it->second;
  }
  std::lock_guard lock(session->mu);
  session->buffer.discard();
  finish_session(*session);
}

std::vector<Uuid> TxnManager::expire_stale_sessions(std::uint64_t now) {
  std::vector<std::pair<Uuid, std::shared_ptr<Session>>> snapshot;
  {
    std::lock_guard lock(sessions_mu_);
    snapshot.assign(sessions_.begin(), sessions_.end());
  }
  std::vector<Uuid> aborted;
  for (auto& [uuid, session] : snapshot) {
    std::lock_guard lock(session->mu);
    if (now <= session->last_active || now - session->last_active <= config_.txn_timeout) continue;
    if (session->buffer.status() != TxnStatus::running) continue;
    session->buffer.discard();
    finish_session(*session);
    aborted.push_back(uuid);
  }
  if (!aborted.empty()) spdlog::debug("{}: expired {} idle transactions", config_.node_id, aborted.size());
  return aborted;
}

bool TxnManager::record_committed_locked(const CommitRecord& record) {
  if (record.writeset.empty()) return false;
  if (index_.contains(record.tid) || index_.is_locally_deleted(record.tid)) return false;
  if (aft::is_superseded(record, index_)) return false;
  index_.insert(record);
  return true;
}

bool TxnManager::record_committed(const CommitRecord& record) {
  std::unique_lock lock(index_mu_);
  return record_committed_locked(record);
}

void TxnManager::bootstrap() {
  ensure_alive();
  if (session_count() != 0) throw Error(ErrorCode::invalid_argument, "bootstrap requires a node without sessions");
  auto keys = backend_->list_prefix(kCommitPrefix, config_.bootstrap_limit, /*reverse=*/true);
  std::uint64_t newest = 0;
  std::size_t indexed = 0;
  for (const auto& key : keys) {
    auto payload = backend_->get(key);
    if (!payload) continue;  // deleted by global GC since the listing
    auto record = decode_commit_value(*payload);
    newest = std::max(newest, record.tid.timestamp);
    if (record_committed(record)) ++indexed;
  }
  {
    std::lock_guard lock(ts_mu_);
    last_ts_ = std::max(last_ts_, newest);
  }
  spdlog::info("{}: bootstrap read {} commit records, indexed {}", config_.node_id, keys.size(), indexed);
}

bool TxnManager::is_superseded(const CommitRecord& record) const {
  std::shared_lock lock(index_mu_);
  return aft::is_superseded(record, index_);
}

std::vector<CommitRecord> TxnManager::take_recent_commits() {
  std::lock_guard lock(recent_mu_);
  std::vector<CommitRecord> out;
  out.swap(recent_);
  return out;
}

std::vector<TransactionId> TxnManager::run_local_gc() {
  ensure_alive();
  std::vector<TransactionId> removed;
  {
    std::unique_lock lock(index_mu_);
    removed = local_gc_sweep(index_, registry_, &cache_);
  }
  flush_deletions();
  return removed;
}

std::vector<TransactionId> TxnManager::answer_gc_candidates(const std::vector<CommitRecord>& candidates) {
  ensure_alive();
  std::unique_lock lock(index_mu_);
  return aft::answer_gc_candidates(index_, candidates);
}

std::size_t TxnManager::flush_deletions() {
  std::vector<std::string> keys;
  {
    std::lock_guard lock(deletions_mu_);
    keys.swap(pending_deletions_);
  }
  if (keys.empty()) return 0;
  try {
    backend_->delete_batch(keys);
  } catch (const StorageError& e) {
    spdlog::warn("{}: deferred deletion of {} keys: {}", config_.node_id, keys.size(), e.what());
    std::lock_guard lock(deletions_mu_);
    pending_deletions_.insert(pending_deletions_.end(), keys.begin(), keys.end());
    return 0;
  }
  return keys.size();
}

std::vector<Uuid> TxnManager::live_transactions() const {
  std::lock_guard lock(sessions_mu_);
  std::vector<Uuid> out;
  out.reserve(sessions_.size());
  for (const auto& [uuid, session] : sessions_) out.push_back(uuid);
  return out;
}

std::size_t TxnManager::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

std::size_t TxnManager::index_size() const {
  std::shared_lock lock(index_mu_);
  return index_.size();
}

CommitIndex TxnManager::index_snapshot() const {
  std::shared_lock lock(index_mu_);
  return index_;
}

std::optional<ReadSet> TxnManager::read_set(const Uuid& txn) const {
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(txn);
    if (it == sessions_.end()) return std::nullopt;
    session = it->second;
  }
  std::lock_guard lock(session->mu);
  return session->reads;
}

}  // namespace aft
