#include "aft/gc_fault.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>

#include "aft/error.hpp"

namespace aft {

std::vector<TransactionId> local_gc_sweep(CommitIndex& index, const ReadRegistry& registry, DataCache* cache) {
  // Dropping a superseded record never removes a key's latest version, so
  // deciding everything up front gives the same answer as deciding one
  // record at a time.
  std::vector<TransactionId> doomed;
  for (const auto& [tid, record] : index.records()) {
    if (is_superseded(record, index) && !registry.has_readers(tid)) doomed.push_back(tid);
  }
  if (cache != nullptr) {
    for (const auto& tid : doomed) {
      for (const auto& key : index.find(tid)->writeset) cache->evict(key, tid);
    }
  }
  index.erase_all(doomed);
  return doomed;
}

std::vector<TransactionId> answer_gc_candidates(CommitIndex& index, const std::vector<CommitRecord>& candidates) {
  std::vector<TransactionId> deleted;
  for (const auto& candidate : candidates) {
    if (index.is_locally_deleted(candidate.tid)) {
      deleted.push_back(candidate.tid);
    } else if (!index.contains(candidate.tid) && is_superseded(candidate, index)) {
      index.mark_locally_deleted(candidate.tid);
      deleted.push_back(candidate.tid);
    }
  }
  return deleted;
}

Coordinator::Coordinator(CoordinatorConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<Clock> clock)
    : config_(config), backend_(std::move(backend)), clock_(std::move(clock)) {
  auto workers = std::max<std::size_t>(1, config_.deletion_workers);
  for (std::size_t i = 0; i < workers; ++i) {
    workers_.emplace_back([this](std::stop_token stop) { deletion_worker(stop); });
  }
}

Coordinator::~Coordinator() {
  for (auto& w : workers_) w.request_stop();
  jobs_cv_.notify_all();
  workers_.clear();
}

void Coordinator::set_nodes(std::vector<std::shared_ptr<NodeLink>> nodes) {
  std::lock_guard lock(mu_);
  nodes_ = std::move(nodes);
}

void Coordinator::add_to_ledger_locked(const CommitRecord& record) {
  if (record.writeset.empty() || ledger_.is_locally_deleted(record.tid)) return;
  ledger_.insert(record);
}

void Coordinator::on_commit_batch(const CommitBatch& batch) {
  std::lock_guard lock(mu_);
  for (const auto& record : batch.records) add_to_ledger_locked(record);
}

std::vector<CommitRecord> Coordinator::fault_scan() {
  auto keys = backend_->list_prefix(kCommitPrefix);
  std::vector<CommitRecord> recovered;
  for (const auto& key : keys) {
    TransactionId tid;
    try {
      tid = decode_commit_key(key);
    } catch (const Error&) {
      spdlog::warn("fault scan: ignoring malformed commit key {}", key);
      continue;
    }
    {
      std::lock_guard lock(mu_);
      if (ledger_.contains(tid) || ledger_.is_locally_deleted(tid)) continue;
    }
    auto payload = backend_->get(key);
    if (!payload) continue;
    auto record = decode_commit_value(*payload);
    std::lock_guard lock(mu_);
    if (ledger_.contains(tid) || ledger_.is_locally_deleted(tid)) continue;
    add_to_ledger_locked(record);
    recovered_in_round_[tid] = round_;
    recovered.push_back(std::move(record));
  }

  if (!recovered.empty()) {
    std::vector<std::shared_ptr<NodeLink>> nodes;
    {
      std::lock_guard lock(mu_);
      nodes = nodes_;
    }
    spdlog::info("fault scan: {} commit records missing from broadcasts", recovered.size());
    for (const auto& node : nodes) {
      try {
        node->fault_notify(recovered);
      } catch (const std::exception& e) {
        spdlog::warn("fault scan: cannot notify {}: {}", node->id(), e.what());
      }
    }
  }
  return recovered;
}

std::vector<TransactionId> Coordinator::global_gc_round() {
  GcCandidateSet proposal;
  std::vector<std::shared_ptr<NodeLink>> nodes;
  {
    std::lock_guard lock(mu_);
    proposal.round = ++round_;
    // records recovered since the previous round wait one more round
    std::erase_if(recovered_in_round_, [&](const auto& kv) { return kv.second + 1 < proposal.round; });
    for (const auto& [tid, record] : ledger_.records()) {
      if (proposal.candidates.size() >= config_.max_candidates_per_round) break;
      if (auto it = recovered_in_round_.find(tid); it != recovered_in_round_.end() && it->second + 1 == proposal.round) {
        continue;
      }
      if (is_superseded(record, ledger_)) proposal.candidates.push_back(record);
    }
    nodes = nodes_;
  }
  if (proposal.candidates.empty() || nodes.empty()) return {};

  std::map<TransactionId, std::size_t> acks;
  for (const auto& node : nodes) {
    GcAck ack;
    try {
      ack = node->gc_candidates(proposal);
    } catch (const std::exception& e) {
      spdlog::debug("gc round {}: no ack from {}: {}", proposal.round, node->id(), e.what());
      return {};
    }
    std::set<TransactionId> unique(ack.deleted.begin(), ack.deleted.end());
    for (const auto& tid : unique) ++acks[tid];
  }

  std::vector<TransactionId> deletable;
  {
    std::lock_guard lock(mu_);
    std::vector<TransactionId> acked;
    std::map<TransactionId, const CommitRecord*> by_tid;
    for (const auto& candidate : proposal.candidates) {
      auto it = acks.find(candidate.tid);
      if (it == acks.end() || it->second != nodes.size()) continue;
      acked.push_back(candidate.tid);
      by_tid.emplace(candidate.tid, &candidate);
    }
    deletable = ledger_.erase_all(acked);
    std::lock_guard jobs_lock(jobs_mu_);
    for (const auto& tid : deletable) jobs_.push_back(DeletionJob{*by_tid.at(tid)});
    deleted_ += deletable.size();
  }
  if (!deletable.empty()) jobs_cv_.notify_all();
  return deletable;
}

void Coordinator::deletion_worker(std::stop_token stop) {
  while (true) {
    std::vector<DeletionJob> batch;
    {
      std::unique_lock lock(jobs_mu_);
      if (!jobs_cv_.wait(lock, stop, [&] { return !jobs_.empty(); })) return;
      // take a handful so deletes are batched
      while (!jobs_.empty() && batch.size() < 64) {
        batch.push_back(std::move(jobs_.front()));
        jobs_.pop_front();
      }
      jobs_in_flight_ += batch.size();
    }
    std::vector<std::string> data_keys;
    std::vector<std::string> commit_keys;
    for (const auto& job : batch) {
      for (const auto& key : job.record.writeset) data_keys.push_back(encode_data_key(key, job.record.tid));
      commit_keys.push_back(encode_commit_key(job.record.tid));
    }
    bool ok = true;
    try {
      // data before commit records: a record never outlives-then-loses data
      // it still points at from a bootstrapping node's point of view
      backend_->delete_batch(data_keys);
      backend_->delete_batch(commit_keys);
    } catch (const StorageError& e) {
      spdlog::warn("deletion worker: {}; will retry", e.what());
      ok = false;
    }
    {
      std::lock_guard lock(jobs_mu_);
      jobs_in_flight_ -= batch.size();
      if (!ok) {
        for (auto& job : batch) jobs_.push_back(std::move(job));
      }
    }
    if (!ok) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      jobs_cv_.notify_all();
    }
    idle_cv_.notify_all();
  }
}

void Coordinator::wait_for_deletions() {
  std::unique_lock lock(jobs_mu_);
  idle_cv_.wait(lock, [&] { return jobs_.empty() && jobs_in_flight_ == 0; });
}

std::vector<std::string> Coordinator::orphan_sweep(std::uint64_t now) {
  std::vector<std::shared_ptr<NodeLink>> nodes;
  {
    std::lock_guard lock(mu_);
    nodes = nodes_;
  }
  std::set<Uuid> live;
  for (const auto& node : nodes) {
    try {
      auto uuids = node->live_transactions();
      live.insert(uuids.begin(), uuids.end());
    } catch (const std::exception&) {
      // an unreachable node's sessions are covered by orphan_age
    }
  }

  auto keys = backend_->list_prefix(kDataPrefix);
  std::vector<std::string> suspects;
  for (const auto& key : keys) {
    std::pair<std::string, TransactionId> decoded;
    try {
      decoded = decode_data_key(key);
    } catch (const Error&) {
      continue;
    }
    const auto& tid = decoded.second;
    if (live.contains(tid.uuid)) continue;
    if (!is_provisional(tid)) {
      {
        std::lock_guard lock(mu_);
        if (ledger_.contains(tid) || ledger_.is_locally_deleted(tid)) continue;
      }
      if (backend_->get(encode_commit_key(tid))) continue;
    }
    suspects.push_back(key);
  }

  std::vector<std::string> doomed;
  {
    std::lock_guard lock(mu_);
    std::map<std::string, std::uint64_t> still_suspect;
    for (const auto& key : suspects) {
      auto it = orphan_first_seen_.find(key);
      std::uint64_t first = it == orphan_first_seen_.end() ? now : it->second;
      if (now >= first && now - first >= config_.orphan_age) {
        doomed.push_back(key);
      } else {
        still_suspect.emplace(key, first);
      }
    }
    orphan_first_seen_ = std::move(still_suspect);
  }
  if (!doomed.empty()) {
    backend_->delete_batch(doomed);
    spdlog::info("orphan sweep: deleted {} keys", doomed.size());
  }
  return doomed;
}

std::size_t Coordinator::ledger_size() const {
  std::lock_guard lock(mu_);
  return ledger_.size();
}

bool Coordinator::in_ledger(const TransactionId& tid) const {
  std::lock_guard lock(mu_);
  return ledger_.contains(tid);
}

std::uint64_t Coordinator::round() const {
  std::lock_guard lock(mu_);
  return round_;
}

std::uint64_t Coordinator::deleted_count() const {
  std::lock_guard lock(mu_);
  return deleted_;
}

}  // namespace aft
