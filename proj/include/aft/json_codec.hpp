// nlohmann/json bindings for the types that cross process boundaries.
#pragma once

#include "json.hpp"

#include "aft/transaction_id.hpp"

namespace aft {

using json = nlohmann::json;

void to_json(json& j, const TransactionId& tid);
void from_json(const json& j, TransactionId& tid);

void to_json(json& j, const CommitRecord& record);
void from_json(const json& j, CommitRecord& record);

std::string base64_encode(std::string_view bytes);
/// Throws Error(protocol_error) on malformed input.
Bytes base64_decode(std::string_view text);

}  // namespace aft
