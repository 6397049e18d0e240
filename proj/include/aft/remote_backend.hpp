// Storage served over the wire protocol, so separate node processes can
// share one backend. The coordinator process hosts the real backend.
#pragma once

#include <memory>
#include <optional>

#include "aft/json_codec.hpp"
#include "aft/storage.hpp"
#include "aft/wire.hpp"

namespace aft {

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(const std::string& address);

  std::optional<Bytes> get(std::string_view key) override;
  void put_batch(std::span<const StorageEntry> entries) override;
  std::vector<std::string> list_prefix(std::string_view prefix, std::optional<std::size_t> limit = std::nullopt,
                                       bool reverse = false) override;
  void delete_batch(std::span<const std::string> keys) override;

 private:
  // transport failures are storage failures from the caller's point of view
  json call(json request);

  wire::Client client_;
};

std::shared_ptr<Backend> make_remote_backend(const BackendConfig& config);

/// Serves storage_get / storage_put_batch / storage_list /
/// storage_delete_batch against `backend`. Returns nullopt for other types.
std::optional<json> handle_storage_request(Backend& backend, const json& request);

}  // namespace aft
