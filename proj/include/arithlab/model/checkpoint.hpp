#pragma once

#include <string>

#include <json.hpp>

#include "arithlab/model/weights.hpp"

namespace arithlab::model {

// Self-describing checkpoint container (see docs/checkpoint_format.md):
// magic, a JSON header with config/metadata/tensor manifest, then raw
// little-endian float32 payloads in manifest order.
void save_checkpoint(const std::string& path, const ModelWeights& weights,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  ModelWeights weights;
  nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace arithlab::model
