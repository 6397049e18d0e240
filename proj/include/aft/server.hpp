// Node and coordinator runtimes: configuration files, request dispatch, and
// the background loops (multicast, local GC, session expiry, GC rounds, fault
// scans).
#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aft/clock.hpp"
#include "aft/gc_fault.hpp"
#include "aft/json_codec.hpp"
#include "aft/replication.hpp"
#include "aft/storage.hpp"
#include "aft/txn_manager.hpp"
#include "aft/wire.hpp"

namespace aft {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitStartup = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` file. '#' starts a comment; values may be quoted.
/// Throws ConfigError on syntax errors and duplicate keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

// Typed extraction: each helper removes the key it reads, so whatever is
// left over afterwards is unknown.
namespace config {
std::string take(std::map<std::string, std::string>& kv, const std::string& key, std::string fallback);
std::uint64_t take_u64(std::map<std::string, std::string>& kv, const std::string& key, std::uint64_t fallback);
double take_double(std::map<std::string, std::string>& kv, const std::string& key, double fallback);
bool take_bool(std::map<std::string, std::string>& kv, const std::string& key, bool fallback);
std::vector<std::string> split_list(const std::string& text);
void reject_leftovers(const std::map<std::string, std::string>& kv);
}  // namespace config

struct NodeConfig {
  std::string node_id = "node-0";
  std::string listen = "127.0.0.1:7100";
  std::vector<std::string> peers;
  std::string coordinator;
  BackendConfig backend;
  std::uint64_t multicast_interval_ms = kDefaultMulticastIntervalMs;
  std::uint64_t local_gc_interval_ms = 1000;
  std::uint64_t txn_timeout_ms = 60'000;
  std::size_t data_cache_bytes = kDefaultDataCacheBytes;
  std::size_t spill_threshold = kDefaultSpillThreshold;
  std::size_t bootstrap_limit = 10'000;
  bool prune = true;
  ClockMode clock = ClockMode::system;
};

/// Backend keys shared by node and coordinator files: backend (memory, file,
/// remote), storage_path, storage_address, batch_mode, latency_min_ms,
/// latency_max_ms, compaction_threshold_bytes.
BackendConfig backend_config_from(std::map<std::string, std::string>& kv);

/// Throws ConfigError on unknown keys, bad values, zero intervals, or a
/// node id that reappears in the peer list.
NodeConfig node_config_from(std::map<std::string, std::string> kv);
NodeConfig load_node_config(const std::filesystem::path& path);

struct CoordinatorFileConfig {
  std::string listen = "127.0.0.1:7000";
  // node id -> address
  std::map<std::string, std::string> nodes;
  BackendConfig backend;
  CoordinatorConfig coordinator;
  // hosts storage for nodes configured with backend = remote
  bool serve_storage = true;
};

/// `nodes` is a comma-separated list of id@host:port entries.
CoordinatorFileConfig coordinator_config_from(std::map<std::string, std::string> kv);
CoordinatorFileConfig load_coordinator_config(const std::filesystem::path& path);

/// Request handling for one node, independent of the transport.
///
/// Client messages: start {uuid?} -> {uuid}; get {uuid,key} -> {value,tid};
/// put {uuid,key,value} -> {ok}; commit {uuid} -> {tid}; abort {uuid} -> {ok}.
/// Peer messages: commit_batch, gc_candidates -> gc_ack, fault_notify,
/// live_txns -> {uuids}.
class NodeService {
 public:
  NodeService(TxnManager& txn, Replicator& replicator) : txn_(txn), replicator_(replicator) {}

  json handle(const json& request);

 private:
  TxnManager& txn_;
  Replicator& replicator_;
};

json commit_batch_to_json(const CommitBatch& batch);
CommitBatch commit_batch_from_json(const json& j);
json gc_candidates_to_json(const GcCandidateSet& set);
GcCandidateSet gc_candidates_from_json(const json& j);

/// Coordinator-side view of a node reached over the wire.
class RemoteNodeLink final : public NodeLink {
 public:
  RemoteNodeLink(std::string id, const std::string& address) : id_(std::move(id)), client_(address, 10'000) {}

  std::string id() const override { return id_; }
  GcAck gc_candidates(const GcCandidateSet& candidates) override;
  void fault_notify(const std::vector<CommitRecord>& records) override;
  std::vector<Uuid> live_transactions() override;

 private:
  std::string id_;
  wire::Client client_;
};

/// Runs a thread that calls `tick` every `interval_ms` until stopped.
class Ticker {
 public:
  Ticker() = default;
  ~Ticker() { stop(); }
  void start(std::uint64_t interval_ms, std::function<void()> tick);
  void stop();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

class NodeServer {
 public:
  explicit NodeServer(NodeConfig config);
  ~NodeServer();

  /// Bootstraps the index and starts serving. Throws StorageError when
  /// bootstrap fails and Error(unavailable) when binding fails.
  void start();
  void stop();
  std::uint16_t port() const { return server_ ? server_->port() : 0; }
  TxnManager& txn() { return *txn_; }

  /// One multicast tick; exposed for tests.
  void broadcast_once();

 private:
  NodeConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<Clock> clock_;
  std::unique_ptr<TxnManager> txn_;
  std::unique_ptr<Replicator> replicator_;
  std::unique_ptr<NodeService> service_;
  std::unique_ptr<wire::Server> server_;
  std::vector<std::unique_ptr<wire::Client>> peers_;
  std::unique_ptr<wire::Client> coordinator_;
  Ticker multicast_, local_gc_, expiry_;
};

class CoordinatorServer {
 public:
  explicit CoordinatorServer(CoordinatorFileConfig config);
  ~CoordinatorServer();

  void start();
  void stop();
  std::uint16_t port() const { return server_ ? server_->port() : 0; }
  Coordinator& coordinator() { return *coordinator_; }

 private:
  json handle(const json& request);

  CoordinatorFileConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<Clock> clock_;
  std::unique_ptr<Coordinator> coordinator_;
  std::unique_ptr<wire::Server> server_;
  Ticker gc_, scan_, orphans_;
};

/// Blocks SIGINT and SIGTERM in the calling thread and every thread it
/// starts afterwards. Call first thing in main.
void block_shutdown_signals();
/// Waits until SIGINT or SIGTERM arrives; returns the signal number.
int wait_for_shutdown_signal();

}  // namespace aft
