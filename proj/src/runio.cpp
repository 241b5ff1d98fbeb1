#include "okdad/runio.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <omp.h>

namespace okdad::runio {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
  }
  fs::rename(tmp, path);
}

namespace {
std::string now_string() {
  const auto t = std::chrono::system_clock::now();
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch())
          .count();
  return std::to_string(secs);
}
}  // namespace

RunManifest RunManifest::begin(const std::string& run_dir,
                               const std::string& command,
                               const config::Config& cfg, uint64_t seed) {
  fs::create_directories(run_dir);
  RunManifest m;
  m.j["format"] = "okdad-run";
  m.j["command"] = command;
  m.j["code_version"] = "okdad 0.1.0";
  m.j["seed"] = seed;
  m.j["omp_max_threads"] = omp_get_max_threads();
  json cj;
  for (const auto& k : config::schema()) cj[k.name] = cfg.get_str(k.name);
  m.j["config"] = cj;
  m.j["started_at_unix"] = now_string();
  m.j["status"] = "running";
  write_file_atomic(run_dir + "/manifest.json", m.j.dump(2) + "\n");
  write_file_atomic(run_dir + "/config.cfg", cfg.render());
  return m;
}

void RunManifest::add(const std::string& key, const json& value) {
  j[key] = value;
}

void RunManifest::finish(const std::string& run_dir,
                         const std::string& status) {
  j["finished_at_unix"] = now_string();
  j["status"] = status;
  write_file_atomic(run_dir + "/manifest.json", j.dump(2) + "\n");
}

synthvid::GeneratorConfig generator_config(const config::Config& c,
                                           uint64_t seed) {
  synthvid::GeneratorConfig g;
  g.num_classes = (int)c.get_int("num_classes");
  g.frame_height = (int)c.get_int("frame_height");
  g.frame_width = (int)c.get_int("frame_width");
  g.min_clip_len = (int)c.get_int("min_clip_len");
  g.max_clip_len = (int)c.get_int("max_clip_len");
  g.gap_len_min = (int)c.get_int("gap_len_min");
  g.gap_len_max = (int)c.get_int("gap_len_max");
  g.actors_per_clip = (int)c.get_int("actors_per_clip");
  g.intensity_noise_std = c.get_real("intensity_noise_std");
  g.seed = seed;
  g.validate();
  return g;
}

nets::ModelConfig model_config(const config::Config& c, nets::ModelKind kind) {
  nets::ModelConfig m;
  m.kind = kind;
  m.num_classes = (int)c.get_int("num_classes");
  m.backbone.in_t = kind == nets::ModelKind::teacher
                        ? (int)c.get_int("T_off")
                        : (int)c.get_int("delta");
  m.backbone.in_h = (int)c.get_int("crop_height");
  m.backbone.in_w = (int)c.get_int("crop_width");
  m.backbone.feature_dim = (int)c.get_int("feature_dim");
  m.backbone.widths = c.get_int_list("widths");
  m.backbone.spatial_strides = c.get_int_list("spatial_strides");
  m.backbone.temporal_strides = c.get_int_list("temporal_strides");
  m.backbone.blocks_per_stage = (int)c.get_int("blocks_per_stage");
  m.class_hidden = (int)c.get_int("class_hidden");
  m.act_hidden = (int)c.get_int("act_hidden");
  m.t_off = (int)c.get_int("T_off");
  m.stride = (int)c.get_int("s");
  m.delta = (int)c.get_int("delta");
  m.crop_margin = c.get_real("crop_margin");
  m.hard_gating = c.get_bool("hard_gating");
  m.actionness_threshold = c.get_real("actionness_threshold");
  m.validate();
  return m;
}

trainer::TrainConfig train_config(const config::Config& c,
                                  trainer::Stage stage, uint64_t seed) {
  trainer::TrainConfig t;
  t.stage = stage;
  t.batch_size = (int)c.get_int("batch_size");
  t.learning_rate = c.get_real("learning_rate");
  t.epochs = (int)c.get_int("epochs");
  t.seed = seed;
  t.r_min = c.get_real("r_min");
  t.teacher_loss.alpha = c.get_real("alpha");
  t.teacher_loss.beta = c.get_real("beta");
  t.teacher_loss.gamma = c.get_real("gamma");
  t.teacher_loss.log_clamp_eps = c.get_real("log_clamp_eps");
  t.student_loss.eta = c.get_real("eta");
  t.student_loss.log_clamp_eps = c.get_real("log_clamp_eps");
  t.init_backbone_from_teacher = c.get_bool("init_backbone_from_teacher");
  t.freeze_backbone = c.get_bool("freeze_backbone");
  t.window_blocks = (int)c.get_int("okdad_window_blocks");
  const std::string g = c.get_str("gating_source");
  if (g == "labels")
    t.gating_source = trainer::GatingSource::labels;
  else if (g == "predictions")
    t.gating_source = trainer::GatingSource::predictions;
  else
    throw std::invalid_argument(
        "config key 'gating_source' must be labels or predictions, got '" +
        g + "'");
  const nets::ModelKind kind = stage == trainer::Stage::teacher
                                   ? nets::ModelKind::teacher
                                   : (stage == trainer::Stage::okdad
                                          ? nets::ModelKind::okdad
                                          : nets::ModelKind::student);
  t.model = model_config(c, kind);
  t.validate();
  return t;
}

}  // namespace okdad::runio
