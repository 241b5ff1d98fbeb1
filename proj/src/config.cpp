#include "okdad/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace okdad::config {

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      // dataset generation
      {"kind", Type::Str, "clips"},
      {"num_classes", Type::Int, "10"},
      {"frame_height", Type::Int, "36"},
      {"frame_width", Type::Int, "36"},
      {"min_clip_len", Type::Int, "30"},
      {"max_clip_len", Type::Int, "60"},
      {"gap_len_min", Type::Int, "24"},
      {"gap_len_max", Type::Int, "60"},
      {"actors_per_clip", Type::Int, "1"},
      {"intensity_noise_std", Type::Real, "0.03"},
      {"num_train", Type::Int, "2000"},
      {"num_test", Type::Int, "300"},
      {"actions_per_sequence", Type::Int, "5"},
      // preprocessing
      {"T_off", Type::Int, "15"},
      {"s", Type::Int, "3"},
      {"delta", Type::Int, "5"},
      {"r_min", Type::Real, "0.025"},
      {"crop_margin", Type::Real, "0.1"},
      {"crop_height", Type::Int, "20"},
      {"crop_width", Type::Int, "20"},
      // model
      {"feature_dim", Type::Int, "64"},
      {"widths", Type::Str, "4,8,16,32"},
      {"spatial_strides", Type::Str, "1,2,2,2"},
      {"temporal_strides", Type::Str, "1,2,2,2"},
      {"blocks_per_stage", Type::Int, "1"},
      {"class_hidden", Type::Int, "256"},
      {"act_hidden", Type::Int, "128"},
      {"hard_gating", Type::Bool, "false"},
      // training
      {"batch_size", Type::Int, "16"},
      {"learning_rate", Type::Real, "1e-4"},
      {"epochs", Type::Int, "10"},
      {"seed", Type::Int, "0"},
      {"alpha", Type::Real, "1"},
      {"beta", Type::Real, "0.5"},
      {"gamma", Type::Real, "0.6667"},
      {"eta", Type::Real, "1"},
      {"log_clamp_eps", Type::Real, "1e-7"},
      {"init_backbone_from_teacher", Type::Bool, "true"},
      {"freeze_backbone", Type::Bool, "false"},
      {"gating_source", Type::Str, "labels"},
      {"okdad_window_blocks", Type::Int, "40"},
      {"actionness_threshold", Type::Real, "0.75"},
  };
  return keys;
}

namespace {

const KeySpec* find_spec(const std::string& name) {
  for (const auto& k : schema())
    if (k.name == name) return &k;
  return nullptr;
}

bool check_type(const KeySpec& spec, const std::string& value) {
  try {
    size_t used = 0;
    switch (spec.type) {
      case Type::Int:
        (void)std::stoll(value, &used);
        return used == value.size();
      case Type::Real:
        (void)std::stod(value, &used);
        return used == value.size();
      case Type::Bool:
        return value == "true" || value == "false" || value == "0" ||
               value == "1";
      case Type::Str:
        return true;
    }
  } catch (...) {
    return false;
  }
  return false;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config::Config() {
  for (const auto& k : schema()) values_[k.name] = k.default_value;
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  Config cfg;
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) +
                       ": expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const KeySpec* spec = find_spec(key);
    if (!spec) {
      errors.push_back("line " + std::to_string(lineno) + ": unknown key '" +
                       key + "'");
      continue;
    }
    if (seen.count(key)) {
      errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" +
                       key + "' (first set on line " +
                       std::to_string(seen[key]) + ")");
      continue;
    }
    seen[key] = lineno;
    if (!check_type(*spec, value)) {
      errors.push_back("line " + std::to_string(lineno) + ": key '" + key +
                       "' expects a " +
                       (spec->type == Type::Int
                            ? "integer"
                            : spec->type == Type::Real ? "real" : "boolean") +
                       ", got '" + value + "'");
      continue;
    }
    cfg.values_[key] = value;
  }
  if (!errors.empty()) {
    std::string msg = "invalid config " + origin + ":";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str(), path);
}

const KeySpec& Config::spec(const std::string& key) const {
  const KeySpec* s = find_spec(key);
  if (!s) throw std::logic_error("config key not in schema: " + key);
  return *s;
}

int64_t Config::get_int(const std::string& key) const {
  if (spec(key).type != Type::Int)
    throw std::logic_error("config key is not an integer: " + key);
  return std::stoll(values_.at(key));
}

double Config::get_real(const std::string& key) const {
  if (spec(key).type != Type::Real)
    throw std::logic_error("config key is not a real: " + key);
  return std::stod(values_.at(key));
}

bool Config::get_bool(const std::string& key) const {
  if (spec(key).type != Type::Bool)
    throw std::logic_error("config key is not a boolean: " + key);
  const auto& v = values_.at(key);
  return v == "true" || v == "1";
}

const std::string& Config::get_str(const std::string& key) const {
  return values_.at(key);
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const std::string& v = values_.at(key);
  std::vector<int> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    size_t used = 0;
    int n = std::stoi(tok, &used);
    if (used != tok.size())
      throw std::invalid_argument("config key '" + key +
                                  "' holds a malformed integer list: " + v);
    out.push_back(n);
  }
  if (out.empty())
    throw std::invalid_argument("config key '" + key + "' list is empty");
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_spec(key))
    throw std::invalid_argument("unknown config key '" + key + "'");
  if (!check_type(*find_spec(key), value))
    throw std::invalid_argument("bad value for config key '" + key + "': " +
                                value);
  values_[key] = value;
}

std::string Config::render() const {
  std::string out;
  for (const auto& k : schema())
    out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

}  // namespace okdad::config
