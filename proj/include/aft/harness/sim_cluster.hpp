// In-process cluster: N transaction managers over one shared backend, a
// coordinator, and the multicast plumbing between them. Background work can
// run on timers or be stepped by hand for deterministic tests.
#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "aft/gc_fault.hpp"
#include "aft/harness/workload.hpp"
#include "aft/replication.hpp"
#include "aft/server.hpp"
#include "aft/txn_manager.hpp"

namespace aft::harness {

struct SimClusterConfig {
  std::size_t nodes = 3;
  BackendConfig backend;
  ClockMode clock = ClockMode::logical;
  bool prune = true;
  TxnManagerConfig node;  // node_id is replaced per node
  CoordinatorConfig coordinator;
  std::optional<std::uint64_t> seed;  // fixes uuid generation
  // background timers (milliseconds)
  std::uint64_t multicast_ms = kDefaultMulticastIntervalMs;
  std::uint64_t local_gc_ms = 1000;
  std::uint64_t expiry_ms = 1000;
  bool local_gc = true;
  bool global_gc = true;
};

class SimCluster final : public Cluster {
 public:
  explicit SimCluster(SimClusterConfig config, std::shared_ptr<Backend> backend = nullptr);
  ~SimCluster() override;

  // Cluster
  std::size_t node_count() const override { return slots_.size(); }
  Uuid start(std::size_t node, std::optional<Uuid> reuse) override;
  ReadResult get(std::size_t node, const Uuid& txn, const std::string& key) override;
  void put(std::size_t node, const Uuid& txn, const std::string& key, Bytes value) override;
  TransactionId commit(std::size_t node, const Uuid& txn) override;
  void abort(std::size_t node, const Uuid& txn) override;
  Backend& storage() override { return *backend_; }
  Clock& clock() override { return *clock_; }

  std::shared_ptr<Backend> backend_ptr() const { return backend_; }
  std::shared_ptr<Clock> clock_ptr() const { return clock_; }
  const SimClusterConfig& config() const noexcept { return config_; }

  /// Throws Error(unavailable) for a node that is down.
  std::shared_ptr<TxnManager> node(std::size_t i) const;
  bool alive(std::size_t i) const;
  Coordinator& coordinator() { return *coordinator_; }
  std::uint64_t coordinator_orphan_age() const noexcept { return config_.coordinator.orphan_age; }

  /// Emulates kill -9: the node loses its sessions and unbroadcast commits.
  void kill(std::size_t i);
  /// Fresh process on the same storage; bootstraps before serving.
  void restart(std::size_t i);
  /// Commits and kills the node before any multicast can carry the commit.
  TransactionId commit_then_kill(std::size_t node, const Uuid& txn);

  // manual steps
  void multicast_tick();
  void local_gc_tick();
  /// Fault scan, then one GC round and an orphan sweep; waits for the
  /// deletions it scheduled.
  void coordinator_tick();
  void fault_scan_tick();
  void global_gc_tick();
  /// Enough multicast rounds that every live node has every live node's
  /// commits.
  void converge();

  void start_background();
  void stop_background();

  std::size_t commit_record_count();

 private:
  struct NodeState {
    NodeState(TxnManagerConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<Clock> clock, bool prune)
        : txn(std::make_shared<TxnManager>(std::move(config), std::move(backend), std::move(clock))),
          replicator(*txn, prune) {}
    std::shared_ptr<TxnManager> txn;
    Replicator replicator;
  };
  struct Slot {
    mutable std::mutex mu;
    std::shared_ptr<NodeState> state;
    bool alive = true;
  };
  class LocalLink;

  std::shared_ptr<NodeState> make_state(std::size_t i) const;
  std::shared_ptr<NodeState> state(std::size_t i) const;
  template <class F>
  auto on_node(std::size_t i, F&& f);

  SimClusterConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<Clock> clock_;
  std::vector<std::unique_ptr<Slot>> slots_;
  std::unique_ptr<Coordinator> coordinator_;
  // held across a commit-and-kill so no multicast slips in between
  std::mutex multicast_mu_;
  Ticker multicast_, local_gc_, scan_, gc_, expiry_;
};

}  // namespace aft::harness
