#pragma once

#include <string>

#include "imitate/condunet.hpp"
#include "json.hpp"

namespace imitate::unet {

nlohmann::json model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Binary checkpoint (magic, JSON header with config echo + training-config
/// hash + parameter table, raw float64 payload) plus a `model.json` sidecar.
void save_checkpoint(const CondUNet& net, const std::string& path,
                     const std::string& train_config_hash);
CondUNet load_checkpoint(const std::string& path);

}  // namespace imitate::unet
