#pragma once

#include <string>

#include <json.hpp>

#include "okdad/config.hpp"
#include "okdad/nets.hpp"
#include "okdad/trainer.hpp"

namespace okdad::runio {

/// Atomic write (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

/// Run manifest: written at run start, finalized (wall-clock, status,
/// artifacts) at run end. The manifest is self-describing: eval runs can be
/// reproduced from it alone.
struct RunManifest {
  nlohmann::ordered_json j;

  static RunManifest begin(const std::string& run_dir,
                           const std::string& command,
                           const config::Config& cfg, uint64_t seed);
  void add(const std::string& key, const nlohmann::ordered_json& value);
  void finish(const std::string& run_dir, const std::string& status);
};

/// Translate the flat config into typed module configs.
synthvid::GeneratorConfig generator_config(const config::Config& c,
                                           uint64_t seed);
nets::ModelConfig model_config(const config::Config& c, nets::ModelKind kind);
trainer::TrainConfig train_config(const config::Config& c,
                                  trainer::Stage stage, uint64_t seed);

}  // namespace okdad::runio
