#pragma once

#include <string>

#include "rrtn/model.hpp"

namespace rrtn {

/// Binary checkpoint: magic "RRTN-CKPT", u32 format version, a JSON echo of
/// the model config, then named parameter blocks (name, shape, values as
/// little-endian 64-bit floats). Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

/// Throws std::runtime_error on bad magic/version or malformed blocks.
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace rrtn
