#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "pwm/tree.hpp"

namespace pwm {

// Tree files: {"nodes": [{"id", "parent", "prob", "prices", "reset",
// "post_prices"}...]}. Streams/claims/processes are node -> value maps.
EventTree tree_from_json(const nlohmann::json& j);
nlohmann::json tree_to_json(const EventTree& tree);
EventTree load_tree(const std::string& path);

NodeValues node_values_from_json(const nlohmann::json& j, const EventTree& tree,
                                 double fill = 0.0);
WithdrawalStream stream_from_json(const nlohmann::json& j, const EventTree& tree);
Claim claim_from_json(const nlohmann::json& j, const EventTree& tree);

}  // namespace pwm
