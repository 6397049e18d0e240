#include "aft/server.hpp"

#include <signal.h>

#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <sstream>

#include "aft/remote_backend.hpp"

namespace aft {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

namespace config {

std::string take(std::map<std::string, std::string>& kv, const std::string& key, std::string fallback) {
  auto node = kv.extract(key);
  return node ? node.mapped() : fallback;
}

std::uint64_t take_u64(std::map<std::string, std::string>& kv, const std::string& key, std::uint64_t fallback) {
  auto node = kv.extract(key);
  if (!node) return fallback;
  const auto& text = node.mapped();
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

double take_double(std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  auto node = kv.extract(key);
  if (!node) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(node.mapped(), &used);
    if (used != node.mapped().size() || v < 0) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative number, got '" + node.mapped() + "'");
  }
}

bool take_bool(std::map<std::string, std::string>& kv, const std::string& key, bool fallback) {
  auto node = kv.extract(key);
  if (!node) return fallback;
  if (node.mapped() == "true") return true;
  if (node.mapped() == "false") return false;
  throw ConfigError(key + ": expected true or false");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void reject_leftovers(const std::map<std::string, std::string>& kv) {
  if (!kv.empty()) throw ConfigError("unknown key '" + kv.begin()->first + "'");
}

}  // namespace config

namespace {

using namespace config;

void require_positive(std::uint64_t value, const char* name) {
  if (value == 0) throw ConfigError(std::string(name) + " must be > 0");
}

void check_address(const std::string& address, const char* name) {
  try {
    wire::parse_endpoint(address);
  } catch (const Error& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

json tid_list(const std::vector<TransactionId>& tids) {
  json out = json::array();
  for (const auto& t : tids) out.push_back(t);
  return out;
}

}  // namespace

// --- configuration ---------------------------------------------------------

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    auto body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

BackendConfig backend_config_from(std::map<std::string, std::string>& kv) {
  BackendConfig cfg;
  auto kind = take(kv, "backend", "memory");
  if (kind == "memory") {
    cfg.kind = BackendKind::in_memory;
  } else if (kind == "file") {
    cfg.kind = BackendKind::durable_file;
  } else if (kind == "remote") {
    cfg.kind = BackendKind::remote;
  } else {
    throw ConfigError("backend: expected memory, file, or remote");
  }
  cfg.root_path = take(kv, "storage_path", "");
  cfg.remote_address = take(kv, "storage_address", "");
  auto mode = take(kv, "batch_mode", "atomic");
  if (mode == "atomic") {
    cfg.batch_mode = BatchMode::atomic;
  } else if (mode == "per_entry") {
    cfg.batch_mode = BatchMode::per_entry;
  } else {
    throw ConfigError("batch_mode: expected atomic or per_entry");
  }
  cfg.compaction_threshold_bytes = take_u64(kv, "compaction_threshold_bytes", cfg.compaction_threshold_bytes);
  double lo = take_double(kv, "latency_min_ms", 0.0);
  double hi = take_double(kv, "latency_max_ms", lo);
  if (hi < lo) throw ConfigError("latency_max_ms < latency_min_ms");
  if (hi > 0) {
    cfg.artificial_latency = LatencyRange{lo, hi};
    cfg.harness_mode = true;
  }
  if (cfg.kind == BackendKind::durable_file && cfg.root_path.empty()) {
    throw ConfigError("backend = file needs storage_path");
  }
  if (cfg.kind == BackendKind::remote) check_address(cfg.remote_address, "storage_address");
  return cfg;
}

NodeConfig node_config_from(std::map<std::string, std::string> kv) {
  NodeConfig cfg;
  cfg.node_id = take(kv, "node_id", cfg.node_id);
  cfg.listen = take(kv, "listen", cfg.listen);
  cfg.peers = split_list(take(kv, "peers", ""));
  cfg.coordinator = take(kv, "coordinator", "");
  cfg.backend = backend_config_from(kv);
  cfg.multicast_interval_ms = take_u64(kv, "multicast_interval_ms", cfg.multicast_interval_ms);
  cfg.local_gc_interval_ms = take_u64(kv, "local_gc_interval_ms", cfg.local_gc_interval_ms);
  cfg.txn_timeout_ms = take_u64(kv, "txn_timeout_ms", cfg.txn_timeout_ms);
  cfg.data_cache_bytes = take_u64(kv, "data_cache_bytes", cfg.data_cache_bytes);
  cfg.spill_threshold = take_u64(kv, "spill_threshold", cfg.spill_threshold);
  cfg.bootstrap_limit = take_u64(kv, "bootstrap_limit", cfg.bootstrap_limit);
  cfg.prune = take_bool(kv, "prune", cfg.prune);
  auto clock = take(kv, "clock", "system");
  if (clock == "system") {
    cfg.clock = ClockMode::system;
  } else if (clock == "logical") {
    cfg.clock = ClockMode::logical;
  } else {
    throw ConfigError("clock: expected system or logical");
  }
  reject_leftovers(kv);

  if (cfg.node_id.empty()) throw ConfigError("node_id must not be empty");
  check_address(cfg.listen, "listen");
  for (const auto& peer : cfg.peers) {
    check_address(peer, "peers");
    if (peer == cfg.listen) throw ConfigError("peers: node " + cfg.node_id + " lists itself");
  }
  if (!cfg.coordinator.empty()) check_address(cfg.coordinator, "coordinator");
  require_positive(cfg.multicast_interval_ms, "multicast_interval_ms");
  require_positive(cfg.local_gc_interval_ms, "local_gc_interval_ms");
  require_positive(cfg.txn_timeout_ms, "txn_timeout_ms");
  return cfg;
}

NodeConfig load_node_config(const std::filesystem::path& path) { return node_config_from(read_key_values(path)); }

CoordinatorFileConfig coordinator_config_from(std::map<std::string, std::string> kv) {
  CoordinatorFileConfig cfg;
  cfg.listen = take(kv, "listen", cfg.listen);
  for (const auto& entry : split_list(take(kv, "nodes", ""))) {
    auto at = entry.find('@');
    if (at == std::string::npos || at == 0) throw ConfigError("nodes: expected id@host:port, got '" + entry + "'");
    auto id = entry.substr(0, at);
    auto address = entry.substr(at + 1);
    check_address(address, "nodes");
    if (!cfg.nodes.emplace(id, address).second) throw ConfigError("nodes: duplicate id '" + id + "'");
  }
  cfg.backend = backend_config_from(kv);
  if (cfg.backend.kind == BackendKind::remote) throw ConfigError("the coordinator cannot use a remote backend");
  auto& c = cfg.coordinator;
  c.gc_interval_ms = take_u64(kv, "gc_interval_ms", c.gc_interval_ms);
  c.fault_scan_interval_ms = take_u64(kv, "fault_scan_interval_ms", c.fault_scan_interval_ms);
  c.deletion_workers = take_u64(kv, "deletion_workers", c.deletion_workers);
  c.orphan_age = take_u64(kv, "orphan_age_ms", c.orphan_age);
  c.max_candidates_per_round = take_u64(kv, "max_candidates_per_round", c.max_candidates_per_round);
  cfg.serve_storage = take_bool(kv, "serve_storage", cfg.serve_storage);
  reject_leftovers(kv);

  check_address(cfg.listen, "listen");
  require_positive(c.gc_interval_ms, "gc_interval_ms");
  require_positive(c.fault_scan_interval_ms, "fault_scan_interval_ms");
  require_positive(c.deletion_workers, "deletion_workers");
  return cfg;
}

CoordinatorFileConfig load_coordinator_config(const std::filesystem::path& path) {
  return coordinator_config_from(read_key_values(path));
}

// --- message codecs ----------------------------------------------------------

json commit_batch_to_json(const CommitBatch& batch) {
  return json{{"type", "commit_batch"}, {"origin", batch.origin}, {"seq", batch.sequence}, {"records", batch.records}};
}

CommitBatch commit_batch_from_json(const json& j) {
  CommitBatch batch;
  batch.origin = j.at("origin").get<std::string>();
  batch.sequence = j.at("seq").get<std::uint64_t>();
  batch.records = j.at("records").get<std::vector<CommitRecord>>();
  return batch;
}

json gc_candidates_to_json(const GcCandidateSet& set) {
  json tids = json::array();
  for (const auto& r : set.candidates) tids.push_back(r.tid);
  return json{{"type", "gc_candidates"}, {"round", set.round}, {"tids", std::move(tids)}, {"records", set.candidates}};
}

GcCandidateSet gc_candidates_from_json(const json& j) {
  GcCandidateSet set;
  set.round = j.at("round").get<std::uint64_t>();
  set.candidates = j.at("records").get<std::vector<CommitRecord>>();
  return set;
}

// --- node service ----------------------------------------------------------

json NodeService::handle(const json& request) {
  const auto& type = request.at("type").get_ref<const std::string&>();
  auto uuid_of = [&] { return Uuid::from_hex(request.at("uuid").get<std::string>()); };

  if (type == "start") {
    std::optional<Uuid> reuse;
    if (request.contains("uuid") && !request["uuid"].is_null()) reuse = uuid_of();
    auto handle = txn_.start_transaction(reuse);
    return json{{"uuid", handle.uuid.hex()}};
  }
  if (type == "get") {
    auto result = txn_.get(uuid_of(), request.at("key").get<std::string>());
    json out{{"value", result.value ? json(base64_encode(*result.value)) : json(nullptr)},
             {"tid", result.version ? json(*result.version) : json(nullptr)},
             {"cowritten", result.cowritten},
             {"own_write", result.own_write}};
    return out;
  }
  if (type == "put") {
    txn_.put(uuid_of(), request.at("key").get<std::string>(), base64_decode(request.at("value").get<std::string>()));
    return json{{"ok", true}};
  }
  if (type == "commit") {
    return json{{"tid", txn_.commit_transaction(uuid_of())}};
  }
  if (type == "abort") {
    txn_.abort_transaction(uuid_of());
    return json{{"ok", true}};
  }
  if (type == "commit_batch") {
    auto merged = replicator_.merge_remote(commit_batch_from_json(request));
    return json{{"merged", merged}};
  }
  if (type == "gc_candidates") {
    auto set = gc_candidates_from_json(request);
    auto deleted = txn_.answer_gc_candidates(set.candidates);
    return json{{"type", "gc_ack"}, {"node", txn_.node_id()}, {"round", set.round}, {"deleted", tid_list(deleted)}};
  }
  if (type == "fault_notify") {
    std::size_t merged = 0;
    for (const auto& record : request.at("records").get<std::vector<CommitRecord>>()) {
      if (txn_.record_committed(record)) ++merged;
    }
    return json{{"merged", merged}};
  }
  if (type == "live_txns") {
    json uuids = json::array();
    for (const auto& u : txn_.live_transactions()) uuids.push_back(u.hex());
    return json{{"uuids", std::move(uuids)}};
  }
  if (type == "ping") return json{{"node", txn_.node_id()}};
  throw Error(ErrorCode::protocol_error, "unknown message type '" + type + "'");
}

// --- remote node link ------------------------------------------------------

GcAck RemoteNodeLink::gc_candidates(const GcCandidateSet& candidates) {
  auto response = client_.call(gc_candidates_to_json(candidates));
  GcAck ack;
  ack.node = response.value("node", id_);
  ack.round = response.at("round").get<std::uint64_t>();
  ack.deleted = response.at("deleted").get<std::vector<TransactionId>>();
  return ack;
}

void RemoteNodeLink::fault_notify(const std::vector<CommitRecord>& records) {
  client_.call(json{{"type", "fault_notify"}, {"records", records}});
}

std::vector<Uuid> RemoteNodeLink::live_transactions() {
  auto response = client_.call(json{{"type", "live_txns"}});
  std::vector<Uuid> out;
  for (const auto& u : response.at("uuids")) out.push_back(Uuid::from_hex(u.get<std::string>()));
  return out;
}

// --- ticker ----------------------------------------------------------------

void Ticker::start(std::uint64_t interval_ms, std::function<void()> tick) {
  stop();
  {
    std::lock_guard lock(mu_);
    stopping_ = false;
  }
  thread_ = std::thread([this, interval_ms, tick = std::move(tick)] {
    std::unique_lock lock(mu_);
    while (!cv_.wait_for(lock, std::chrono::milliseconds(interval_ms), [&] { return stopping_; })) {
      lock.unlock();
      try {
        tick();
      } catch (const std::exception& e) {
        spdlog::warn("background task failed: {}", e.what());
      }
      lock.lock();
    }
  });
}

void Ticker::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

// --- node server -----------------------------------------------------------

NodeServer::NodeServer(NodeConfig config) : config_(std::move(config)) {}

NodeServer::~NodeServer() { stop(); }

void NodeServer::start() {
  backend_ = make_backend(config_.backend);
  clock_ = make_clock(config_.clock);
  TxnManagerConfig tc;
  tc.node_id = config_.node_id;
  tc.txn_timeout = config_.txn_timeout_ms;
  tc.spill_threshold = config_.spill_threshold;
  tc.data_cache_bytes = config_.data_cache_bytes;
  tc.bootstrap_limit = config_.bootstrap_limit;
  txn_ = std::make_unique<TxnManager>(tc, backend_, clock_);
  txn_->bootstrap();
  spdlog::info("{}: bootstrapped {} commit records", config_.node_id, txn_->index_size());

  replicator_ = std::make_unique<Replicator>(*txn_, config_.prune);
  service_ = std::make_unique<NodeService>(*txn_, *replicator_);
  server_ = std::make_unique<wire::Server>(wire::parse_endpoint(config_.listen),
                                           [this](const json& request) { return service_->handle(request); });
  server_->start();
  spdlog::info("{}: listening on port {}", config_.node_id, server_->port());

  for (const auto& peer : config_.peers) peers_.push_back(std::make_unique<wire::Client>(peer, 5'000));
  if (!config_.coordinator.empty()) coordinator_ = std::make_unique<wire::Client>(config_.coordinator, 5'000);

  multicast_.start(config_.multicast_interval_ms, [this] { broadcast_once(); });
  local_gc_.start(config_.local_gc_interval_ms, [this] {
    auto removed = txn_->run_local_gc();
    if (!removed.empty()) spdlog::debug("{}: local gc dropped {}", config_.node_id, removed.size());
  });
  expiry_.start(std::max<std::uint64_t>(1, config_.txn_timeout_ms / 4),
                [this] { txn_->expire_stale_sessions(clock_->now()); });
}

void NodeServer::broadcast_once() {
  auto out = replicator_->collect_broadcast();
  auto peers_msg = commit_batch_to_json(out.peers);
  for (auto& peer : peers_) {
    try {
      peer->call(peers_msg);
    } catch (const Error& e) {
      spdlog::debug("{}: multicast to {} failed: {}", config_.node_id, peer->endpoint().str(), e.what());
    }
  }
  if (coordinator_) {
    try {
      coordinator_->call(commit_batch_to_json(out.fault_manager));
    } catch (const Error& e) {
      // the fault scan picks these records up from storage
      spdlog::debug("{}: coordinator unreachable: {}", config_.node_id, e.what());
    }
  }
}

void NodeServer::stop() {
  multicast_.stop();
  local_gc_.stop();
  expiry_.stop();
  if (server_) server_->stop();
}

// --- coordinator server ----------------------------------------------------

CoordinatorServer::CoordinatorServer(CoordinatorFileConfig config) : config_(std::move(config)) {}

CoordinatorServer::~CoordinatorServer() { stop(); }

void CoordinatorServer::start() {
  backend_ = make_backend(config_.backend);
  clock_ = make_clock(ClockMode::system);
  coordinator_ = std::make_unique<Coordinator>(config_.coordinator, backend_, clock_);
  std::vector<std::shared_ptr<NodeLink>> links;
  for (const auto& [id, address] : config_.nodes) links.push_back(std::make_shared<RemoteNodeLink>(id, address));
  coordinator_->set_nodes(std::move(links));

  server_ = std::make_unique<wire::Server>(wire::parse_endpoint(config_.listen),
                                           [this](const json& request) { return handle(request); });
  server_->start();
  spdlog::info("coordinator: listening on port {}", server_->port());

  scan_.start(config_.coordinator.fault_scan_interval_ms, [this] { coordinator_->fault_scan(); });
  gc_.start(config_.coordinator.gc_interval_ms, [this] { coordinator_->global_gc_round(); });
  orphans_.start(std::max<std::uint64_t>(1000, config_.coordinator.orphan_age / 10),
                 [this] { coordinator_->orphan_sweep(clock_->now()); });
}

json CoordinatorServer::handle(const json& request) {
  const auto& type = request.at("type").get_ref<const std::string&>();
  if (type == "commit_batch") {
    coordinator_->on_commit_batch(commit_batch_from_json(request));
    return json{{"ok", true}};
  }
  if (config_.serve_storage) {
    if (auto response = handle_storage_request(*backend_, request)) return *response;
  }
  if (type == "ping") return json{{"node", "coordinator"}};
  throw Error(ErrorCode::protocol_error, "unknown message type '" + type + "'");
}

void CoordinatorServer::stop() {
  gc_.stop();
  scan_.stop();
  orphans_.stop();
  if (server_) server_->stop();
}

// --- signals ---------------------------------------------------------------

namespace {
sigset_t shutdown_set() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}
}  // namespace

void block_shutdown_signals() {
  auto set = shutdown_set();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

int wait_for_shutdown_signal() {
  auto set = shutdown_set();
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

}  // namespace aft
