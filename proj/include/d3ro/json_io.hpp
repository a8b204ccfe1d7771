#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "d3ro/model.hpp"

namespace d3ro {

struct InstanceBundle {
    D3ROInstance instance;
    std::optional<GroundTruth> ground_truth;
};

nlohmann::json instance_to_json(const D3ROInstance& inst, const GroundTruth* gt = nullptr);
InstanceBundle instance_from_json(const nlohmann::json& j);

void save_instance(const std::string& path, const D3ROInstance& inst, const GroundTruth* gt = nullptr);
InstanceBundle load_instance(const std::string& path);

}  // namespace d3ro
