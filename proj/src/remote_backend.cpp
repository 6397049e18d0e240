#include "aft/remote_backend.hpp"

namespace aft {

RemoteBackend::RemoteBackend(const std::string& address) : client_(address) {}

json RemoteBackend::call(json request) {
  try {
    return client_.call(std::move(request));
  } catch (const StorageError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) throw;
    throw StorageError(std::string("remote storage: ") + e.what());
  }
}

std::optional<Bytes> RemoteBackend::get(std::string_view key) {
  auto response = call({{"type", "storage_get"}, {"key", key}});
  const auto& value = response.at("value");
  if (value.is_null()) return std::nullopt;
  return base64_decode(value.get<std::string>());
}

void RemoteBackend::put_batch(std::span<const StorageEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  json list = json::array();
  for (const auto& e : entries) list.push_back({{"key", e.key}, {"value", base64_encode(e.value)}});
  call({{"type", "storage_put_batch"}, {"entries", std::move(list)}});
}

std::vector<std::string> RemoteBackend::list_prefix(std::string_view prefix, std::optional<std::size_t> limit,
                                                    bool reverse) {
  json request{{"type", "storage_list"}, {"prefix", prefix}, {"reverse", reverse}};
  if (limit) request["limit"] = *limit;
  return call(std::move(request)).at("keys").get<std::vector<std::string>>();
}

void RemoteBackend::delete_batch(std::span<const std::string> keys) {
  if (keys.empty()) return;
  call({{"type", "storage_delete_batch"}, {"keys", std::vector<std::string>(keys.begin(), keys.end())}});
}

std::shared_ptr<Backend> make_remote_backend(const BackendConfig& config) {
  if (config.remote_address.empty()) throw Error(ErrorCode::invalid_argument, "remote backend needs an address");
  return std::make_shared<RemoteBackend>(config.remote_address);
}

std::optional<json> handle_storage_request(Backend& backend, const json& request) {
  const auto& type = request.at("type").get_ref<const std::string&>();
  if (type == "storage_get") {
    auto value = backend.get(request.at("key").get<std::string>());
    return json{{"value", value ? json(base64_encode(*value)) : json(nullptr)}};
  }
  if (type == "storage_put_batch") {
    std::vector<StorageEntry> entries;
    for (const auto& e : request.at("entries")) {
      entries.push_back({e.at("key").get<std::string>(), base64_decode(e.at("value").get<std::string>())});
    }
    backend.put_batch(entries);
    return json{{"ok", true}};
  }
  if (type == "storage_list") {
    std::optional<std::size_t> limit;
    if (request.contains("limit") && !request["limit"].is_null()) limit = request["limit"].get<std::size_t>();
    auto keys = backend.list_prefix(request.at("prefix").get<std::string>(), limit, request.value("reverse", false));
    return json{{"keys", std::move(keys)}};
  }
  if (type == "storage_delete_batch") {
    auto keys = request.at("keys").get<std::vector<std::string>>();
    backend.delete_batch(keys);
    return json{{"ok", true}};
  }
  return std::nullopt;
}

}  // namespace aft
