#include "aft/harness/sim_cluster.hpp"

#include <spdlog/spdlog.h>

#include "aft/error.hpp"

namespace aft::harness {

class SimCluster::LocalLink final : public NodeLink {
 public:
  LocalLink(SimCluster& cluster, std::size_t index) : cluster_(cluster), index_(index) {}

  std::string id() const override { return "node-" + std::to_string(index_); }
  GcAck gc_candidates(const GcCandidateSet& candidates) override {
    auto txn = cluster_.node(index_);
    return GcAck{id(), candidates.round, txn->answer_gc_candidates(candidates.candidates)};
  }
  void fault_notify(const std::vector<CommitRecord>& records) override {
    auto txn = cluster_.node(index_);
    for (const auto& record : records) txn->record_committed(record);
  }
  std::vector<Uuid> live_transactions() override { return cluster_.node(index_)->live_transactions(); }

 private:
  SimCluster& cluster_;
  std::size_t index_;
};

SimCluster::SimCluster(SimClusterConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)),
      backend_(backend ? std::move(backend) : make_backend(config_.backend)),
      clock_(make_clock(config_.clock)) {
  if (config_.nodes == 0) throw Error(ErrorCode::invalid_argument, "a cluster needs at least one node");
  for (std::size_t i = 0; i < config_.nodes; ++i) {
    auto slot = std::make_unique<Slot>();
    slot->state = make_state(i);
    slot->state->txn->bootstrap();
    slots_.push_back(std::move(slot));
  }
  coordinator_ = std::make_unique<Coordinator>(config_.coordinator, backend_, clock_);
  std::vector<std::shared_ptr<NodeLink>> links;
  for (std::size_t i = 0; i < config_.nodes; ++i) links.push_back(std::make_shared<LocalLink>(*this, i));
  coordinator_->set_nodes(std::move(links));
}

SimCluster::~SimCluster() {
  stop_background();
  coordinator_.reset();
}

std::shared_ptr<SimCluster::NodeState> SimCluster::make_state(std::size_t i) const {
  TxnManagerConfig tc = config_.node;
  tc.node_id = "node-" + std::to_string(i);
  if (config_.seed) tc.uuid_seed = *config_.seed;
  return std::make_shared<NodeState>(tc, backend_, clock_, config_.prune);
}

std::shared_ptr<SimCluster::NodeState> SimCluster::state(std::size_t i) const {
  if (i >= slots_.size()) throw Error(ErrorCode::invalid_argument, "no node " + std::to_string(i));
  auto& slot = *slots_[i];
  std::lock_guard lock(slot.mu);
  if (!slot.alive || slot.state->txn->crashed()) {
    throw Error(ErrorCode::unavailable, "node-" + std::to_string(i) + " is down");
  }
  return slot.state;
}

std::shared_ptr<TxnManager> SimCluster::node(std::size_t i) const { return state(i)->txn; }

bool SimCluster::alive(std::size_t i) const {
  auto& slot = *slots_.at(i);
  std::lock_guard lock(slot.mu);
  return slot.alive && !slot.state->txn->crashed();
}

template <class F>
auto SimCluster::on_node(std::size_t i, F&& f) {
  auto txn = node(i);
  try {
    return f(*txn);
  } catch (const InjectedCrash& crash) {
    kill(i);
    throw Error(ErrorCode::unavailable, "node-" + std::to_string(i) + " crashed at " + crash.point());
  }
}

Uuid SimCluster::start(std::size_t node, std::optional<Uuid> reuse) {
  return on_node(node, [&](TxnManager& t) { return t.start_transaction(reuse).uuid; });
}

ReadResult SimCluster::get(std::size_t node, const Uuid& txn, const std::string& key) {
  return on_node(node, [&](TxnManager& t) { return t.get(txn, key); });
}

void SimCluster::put(std::size_t node, const Uuid& txn, const std::string& key, Bytes value) {
  on_node(node, [&](TxnManager& t) { t.put(txn, key, std::move(value)); });
}

TransactionId SimCluster::commit(std::size_t node, const Uuid& txn) {
  return on_node(node, [&](TxnManager& t) { return t.commit_transaction(txn); });
}

void SimCluster::abort(std::size_t node, const Uuid& txn) {
  on_node(node, [&](TxnManager& t) { t.abort_transaction(txn); });
}

void SimCluster::kill(std::size_t i) {
  auto& slot = *slots_.at(i);
  std::lock_guard lock(slot.mu);
  slot.alive = false;
  slot.state->txn->mark_crashed();
}

void SimCluster::restart(std::size_t i) {
  auto fresh = make_state(i);
  fresh->txn->bootstrap();
  auto& slot = *slots_.at(i);
  std::lock_guard lock(slot.mu);
  slot.state->txn->mark_crashed();
  slot.state = std::move(fresh);
  slot.alive = true;
}

TransactionId SimCluster::commit_then_kill(std::size_t node, const Uuid& txn) {
  std::lock_guard lock(multicast_mu_);
  auto tid = commit(node, txn);
  kill(node);
  return tid;
}

void SimCluster::multicast_tick() {
  std::lock_guard lock(multicast_mu_);
  std::vector<std::pair<std::size_t, Replicator::Outgoing>> outgoing;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    std::shared_ptr<NodeState> s;
    try {
      s = state(i);
    } catch (const Error&) {
      continue;
    }
    outgoing.emplace_back(i, s->replicator.collect_broadcast());
  }
  for (auto& [origin, out] : outgoing) {
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (j == origin) continue;
      try {
        state(j)->replicator.merge_remote(out.peers);
      } catch (const Error&) {
        // lost to a dead peer; nothing retransmits it
      }
    }
    coordinator_->on_commit_batch(out.fault_manager);
  }
}

void SimCluster::local_gc_tick() {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    try {
      state(i)->txn->run_local_gc();
    } catch (const Error&) {
    }
  }
}

void SimCluster::fault_scan_tick() { coordinator_->fault_scan(); }

void SimCluster::global_gc_tick() {
  coordinator_->global_gc_round();
  coordinator_->wait_for_deletions();
}

void SimCluster::coordinator_tick() {
  fault_scan_tick();
  global_gc_tick();
  coordinator_->orphan_sweep(clock_->now());
}

void SimCluster::converge() {
  multicast_tick();
  multicast_tick();
}

void SimCluster::start_background() {
  multicast_.start(config_.multicast_ms, [this] { multicast_tick(); });
  if (config_.local_gc) local_gc_.start(config_.local_gc_ms, [this] { local_gc_tick(); });
  scan_.start(config_.coordinator.fault_scan_interval_ms, [this] { coordinator_->fault_scan(); });
  if (config_.global_gc) {
    gc_.start(config_.coordinator.gc_interval_ms, [this] {
      coordinator_->global_gc_round();
      coordinator_->orphan_sweep(clock_->now());
    });
  }
  expiry_.start(config_.expiry_ms, [this] {
    auto now = clock_->now();
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      try {
        state(i)->txn->expire_stale_sessions(now);
      } catch (const Error&) {
      }
    }
  });
}

void SimCluster::stop_background() {
  multicast_.stop();
  local_gc_.stop();
  scan_.stop();
  gc_.stop();
  expiry_.stop();
  if (coordinator_) coordinator_->wait_for_deletions();
}

std::size_t SimCluster::commit_record_count() { return backend_->list_prefix(kCommitPrefix).size(); }

}  // namespace aft::harness
