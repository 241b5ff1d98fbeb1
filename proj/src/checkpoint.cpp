#include "okdad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace okdad::checkpoint {

using json = nlohmann::ordered_json;
using nets::Model;
using nets::ModelConfig;

namespace {

constexpr char kMagic[4] = {'O', 'K', 'D', 'C'};

struct NamedArray {
  std::string name;
  const Tensor* tensor;
};

std::vector<NamedArray> all_arrays(const Model& m) {
  std::vector<NamedArray> arrays;
  for (const auto& p : m.store.params)
    arrays.push_back({p->name, &p->value});
  if (m.cfg.kind == nets::ModelKind::teacher) {
    arrays.push_back({"bn.running_mean", &m.bn.running_mean});
    arrays.push_back({"bn.running_var", &m.bn.running_var});
  }
  return arrays;
}

Tensor* mutable_array(Model& m, const std::string& name) {
  if (auto* p = m.store.find(name)) return &p->value;
  if (name == "bn.running_mean") return &m.bn.running_mean;
  if (name == "bn.running_var") return &m.bn.running_var;
  return nullptr;
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["kind"] = nets::to_string(cfg.kind);
  j["num_classes"] = cfg.num_classes;
  json bb;
  bb["in_t"] = cfg.backbone.in_t;
  bb["in_h"] = cfg.backbone.in_h;
  bb["in_w"] = cfg.backbone.in_w;
  bb["feature_dim"] = cfg.backbone.feature_dim;
  bb["widths"] = cfg.backbone.widths;
  bb["spatial_strides"] = cfg.backbone.spatial_strides;
  bb["temporal_strides"] = cfg.backbone.temporal_strides;
  bb["blocks_per_stage"] = cfg.backbone.blocks_per_stage;
  j["backbone"] = bb;
  j["class_hidden"] = cfg.class_hidden;
  j["act_hidden"] = cfg.act_hidden;
  j["t_off"] = cfg.t_off;
  j["stride"] = cfg.stride;
  j["delta"] = cfg.delta;
  j["crop_margin"] = cfg.crop_margin;
  j["hard_gating"] = cfg.hard_gating;
  j["actionness_threshold"] = cfg.actionness_threshold;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.kind = nets::model_kind_from_string(j.at("kind"));
  cfg.num_classes = j.at("num_classes");
  const auto& bb = j.at("backbone");
  cfg.backbone.in_t = bb.at("in_t");
  cfg.backbone.in_h = bb.at("in_h");
  cfg.backbone.in_w = bb.at("in_w");
  cfg.backbone.feature_dim = bb.at("feature_dim");
  cfg.backbone.widths = bb.at("widths").get<std::vector<int>>();
  cfg.backbone.spatial_strides =
      bb.at("spatial_strides").get<std::vector<int>>();
  cfg.backbone.temporal_strides =
      bb.at("temporal_strides").get<std::vector<int>>();
  cfg.backbone.blocks_per_stage = bb.at("blocks_per_stage");
  cfg.class_hidden = j.at("class_hidden");
  cfg.act_hidden = j.at("act_hidden");
  cfg.t_off = j.at("t_off");
  cfg.stride = j.at("stride");
  cfg.delta = j.at("delta");
  cfg.crop_margin = j.at("crop_margin");
  cfg.hard_gating = j.at("hard_gating");
  cfg.actionness_threshold = j.at("actionness_threshold");
  return cfg;
}

void save_model(const Model& model, const std::string& path,
                int64_t training_step, const json& metrics) {
  json manifest;
  manifest["format"] = "okdad-checkpoint";
  manifest["model"] = model_config_to_json(model.cfg);
  manifest["training_step"] = training_step;
  manifest["metrics"] = metrics;
  json dir = json::array();
  int64_t offset = 0;
  const auto arrays = all_arrays(model);
  for (const auto& a : arrays) {
    dir.push_back({{"name", a.name},
                   {"shape", a.tensor->shape},
                   {"offset", offset},
                   {"count", a.tensor->numel()}});
    offset += a.tensor->numel();
  }
  manifest["arrays"] = dir;
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  const uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t mlen = mtext.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mtext.data(), (std::streamsize)mtext.size());
  for (const auto& a : arrays)
    f.write(reinterpret_cast<const char*>(a.tensor->ptr()),
            (std::streamsize)(a.tensor->numel() * sizeof(double)));
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Loaded load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing checkpoint: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t mlen = 0;
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (!f.read(reinterpret_cast<char*>(&version), 4) || version != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  if (!f.read(reinterpret_cast<char*>(&mlen), 8))
    throw std::runtime_error("corrupt checkpoint header: " + path);
  std::string mtext(mlen, '\0');
  if (!f.read(mtext.data(), (std::streamsize)mlen))
    throw std::runtime_error("corrupt checkpoint manifest: " + path);
  json manifest;
  try {
    manifest = json::parse(mtext);
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt checkpoint manifest in " + path + ": " +
                             e.what());
  }
  if (manifest.value("format", "") != "okdad-checkpoint")
    throw std::runtime_error("wrong archive format in " + path);

  Loaded out{Model::build(model_config_from_json(manifest.at("model")), 0),
             manifest.value("training_step", (int64_t)0),
             manifest.value("metrics", json::object())};

  size_t loaded = 0;
  for (const auto& entry : manifest.at("arrays")) {
    const std::string name = entry.at("name");
    const auto shape = entry.at("shape").get<std::vector<int>>();
    const int64_t count = entry.at("count");
    Tensor* t = mutable_array(out.model, name);
    if (!t)
      throw std::runtime_error("checkpoint " + path +
                               " has unknown array: " + name);
    if (t->shape != shape)
      throw std::runtime_error("checkpoint " + path + " shape mismatch for " +
                               name + ": file " + Tensor(shape).shape_str() +
                               " vs model " + t->shape_str());
    if (count != t->numel())
      throw std::runtime_error("checkpoint " + path + " bad count for " +
                               name);
    if (!f.read(reinterpret_cast<char*>(t->ptr()),
                (std::streamsize)(count * sizeof(double))))
      throw std::runtime_error("truncated checkpoint data in " + path);
    ++loaded;
  }
  if (loaded != all_arrays(out.model).size())
    throw std::runtime_error("checkpoint " + path +
                             " is missing arrays for this model kind");
  return out;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= (uint8_t)buf[i];
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  return h;
}

}  // namespace okdad::checkpoint
