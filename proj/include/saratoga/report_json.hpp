#pragma once

// Versioned JSON encodings of transfer and comparison reports.
//
// 128-bit quantities are JSON numbers when they fit in 64 bits and decimal
// strings otherwise.

#include <optional>
#include <string>

#include <json.hpp>

#include "saratoga/comparison.hpp"
#include "saratoga/expected.hpp"
#include "saratoga/session.hpp"

namespace saratoga::report {

inline constexpr const char* kSchemaVersion = "1.0";

nlohmann::json u128_to_json(u128 v);
std::optional<u128> u128_from_json(const nlohmann::json& j);

nlohmann::json to_json(const session::TransferReport& r);
Expected<session::TransferReport, std::string> transfer_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const netsim::SimLinkConfig& c);
nlohmann::json to_json(const netsim::ComparisonReport& r);

}  // namespace saratoga::report
