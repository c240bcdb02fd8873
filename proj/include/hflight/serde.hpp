#pragma once

#include <nlohmann/json.hpp>

#include "hflight/dataplane.hpp"
#include "hflight/model.hpp"
#include "hflight/strategy.hpp"

namespace hflight {

// JSON codecs for the small control-plane records. Numeric fields round-trip
// exactly (nlohmann emits shortest-round-trip doubles and native integers),
// which the cross-launcher determinism guarantees rely on.

nlohmann::json to_json(const ProxyRef& ref);
ProxyRef proxy_ref_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LossReport& r);
LossReport loss_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NodeState& s);
NodeState node_state_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TransferRecord& r);
TransferRecord transfer_record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace hflight
