#include "aft/json_codec.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include "aft/error.hpp"

namespace aft {

namespace base64 = boost::beast::detail::base64;

void to_json(json& j, const TransactionId& tid) {
  j = json{{"ts", tid.timestamp}, {"uuid", tid.uuid.hex()}};
}

void from_json(const json& j, TransactionId& tid) {
  tid.timestamp = j.at("ts").get<std::uint64_t>();
  tid.uuid = Uuid::from_hex(j.at("uuid").get<std::string>());
}

void to_json(json& j, const CommitRecord& record) {
  j = json{{"ts", record.tid.timestamp}, {"uuid", record.tid.uuid.hex()}, {"writeset", record.writeset}};
}

void from_json(const json& j, CommitRecord& record) {
  from_json(j, record.tid);
  record.writeset.clear();
  for (const auto& key : j.at("writeset")) record.writeset.insert(key.get<std::string>());
}

std::string base64_encode(std::string_view bytes) {
  std::string out(base64::encoded_size(bytes.size()), '\0');
  out.resize(base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::protocol_error, "malformed base64");
  Bytes out(base64::decoded_size(text.size()), '\0');
  // beast stops at the padding without counting it
  auto body = text;
  for (int i = 0; i < 2 && !body.empty() && body.back() == '='; ++i) body.remove_suffix(1);
  auto [written, read] = base64::decode(out.data(), body.data(), body.size());
  if (read != body.size()) throw Error(ErrorCode::protocol_error, "malformed base64");
  out.resize(written);
  return out;
}

}  // namespace aft
