#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "okdad/nets.hpp"

namespace okdad::checkpoint {

/// Archive layout: magic, version, a JSON manifest (model config, training
/// step, metric snapshot, array directory) followed by one raw little-endian
/// double array per named parameter. Documented in docs/file_formats.md.
void save_model(const nets::Model& model, const std::string& path,
                int64_t training_step, const nlohmann::ordered_json& metrics);

struct Loaded {
  nets::Model model;
  int64_t training_step = 0;
  nlohmann::ordered_json metrics;
};

/// Rebuilds the model from the stored config and loads every array,
/// verifying name-by-name shape agreement. Any mismatch throws.
Loaded load_model(const std::string& path);

nlohmann::ordered_json model_config_to_json(const nets::ModelConfig& cfg);
nets::ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

/// FNV-1a of a file's bytes; used to tie caches to checkpoints.
uint64_t file_hash(const std::string& path);

}  // namespace okdad::checkpoint
