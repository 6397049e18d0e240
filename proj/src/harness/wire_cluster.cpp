#include "aft/harness/wire_cluster.hpp"

#include <functional>
#include <thread>

namespace aft::harness {

WireCluster::WireCluster(const std::vector<std::string>& node_addresses, std::shared_ptr<Backend> storage,
                         std::size_t connections_per_node)
    : storage_(std::move(storage)) {
  for (const auto& address : node_addresses) {
    std::vector<std::unique_ptr<wire::Client>> pool;
    for (std::size_t i = 0; i < std::max<std::size_t>(1, connections_per_node); ++i) {
      pool.push_back(std::make_unique<wire::Client>(address));
    }
    pools_.push_back(std::move(pool));
  }
}

wire::Client& WireCluster::client(std::size_t node) {
  auto& pool = pools_.at(node);
  auto slot = std::hash<std::thread::id>{}(std::this_thread::get_id()) % pool.size();
  return *pool[slot];
}

Uuid WireCluster::start(std::size_t node, std::optional<Uuid> reuse) {
  json request{{"type", "start"}};
  if (reuse) request["uuid"] = reuse->hex();
  return Uuid::from_hex(client(node).call(std::move(request)).at("uuid").get<std::string>());
}

ReadResult WireCluster::get(std::size_t node, const Uuid& txn, const std::string& key) {
  auto response = client(node).call({{"type", "get"}, {"uuid", txn.hex()}, {"key", key}});
  ReadResult result;
  if (!response.at("value").is_null()) result.value = base64_decode(response["value"].get<std::string>());
  if (!response.at("tid").is_null()) result.version = response["tid"].get<TransactionId>();
  result.cowritten = response.value("cowritten", KeySet{});
  result.own_write = response.value("own_write", false);
  return result;
}

void WireCluster::put(std::size_t node, const Uuid& txn, const std::string& key, Bytes value) {
  client(node).call({{"type", "put"}, {"uuid", txn.hex()}, {"key", key}, {"value", base64_encode(value)}});
}

TransactionId WireCluster::commit(std::size_t node, const Uuid& txn) {
  return client(node).call({{"type", "commit"}, {"uuid", txn.hex()}}).at("tid").get<TransactionId>();
}

void WireCluster::abort(std::size_t node, const Uuid& txn) {
  client(node).call({{"type", "abort"}, {"uuid", txn.hex()}});
}

}  // namespace aft::harness
