// Cluster view over running aft-node processes.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aft/harness/workload.hpp"
#include "aft/wire.hpp"

namespace aft::harness {

class WireCluster final : public Cluster {
 public:
  /// `storage` is used only by bypass runs; it should be the backend the
  /// nodes share.
  WireCluster(const std::vector<std::string>& node_addresses, std::shared_ptr<Backend> storage,
              std::size_t connections_per_node = 8);

  std::size_t node_count() const override { return pools_.size(); }
  Uuid start(std::size_t node, std::optional<Uuid> reuse) override;
  ReadResult get(std::size_t node, const Uuid& txn, const std::string& key) override;
  void put(std::size_t node, const Uuid& txn, const std::string& key, Bytes value) override;
  TransactionId commit(std::size_t node, const Uuid& txn) override;
  void abort(std::size_t node, const Uuid& txn) override;
  Backend& storage() override { return *storage_; }
  Clock& clock() override { return clock_; }

 private:
  wire::Client& client(std::size_t node);

  std::vector<std::vector<std::unique_ptr<wire::Client>>> pools_;
  std::shared_ptr<Backend> storage_;
  SystemClock clock_;
};

}  // namespace aft::harness
