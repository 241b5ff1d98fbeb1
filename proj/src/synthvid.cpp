#include "okdad/synthvid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "okdad/rng.hpp"

namespace okdad::synthvid {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pose of one actor at one time step: a center point plus 4 limb points.
struct Pose {
  double cy = 0, cx = 0;
  double ly[4] = {0, 0, 0, 0};
  double lx[4] = {0, 0, 0, 0};
};

// Per-clip motion parameters drawn once from the clip RNG.
struct Motion {
  int family = 0;
  double speed = 1.0;
  double phase = 0.0;
  double radius = 7.0;
  double cy = 0, cx = 0;  // initial center
  double vy = 0, vx = 0;  // slow drift (fake camera movement)
};

// Classes are parametric internal-motion templates. Cropping normalizes
// global position and scale, so classes differ in motion *relative to the
// actor*: orbit direction (classes 0 and 1 are a time-reversed pair), orbit
// speed, radial pulsing, scissor axis, bar rotation, lissajous paths.
Motion draw_motion(const GeneratorConfig& cfg, int class_id, rng::Stream& rs) {
  Motion m;
  const int base = class_id % 6;
  const int tier = class_id / 6;
  m.family = base;
  m.speed = (0.22 + 0.05 * base / 6.0) * (1.0 + 0.9 * tier) *
            rs.uniform(0.9, 1.1);
  m.phase = rs.uniform(0.0, 2.0 * kPi);
  const double scale = std::min(cfg.frame_height, cfg.frame_width);
  m.radius = scale * rs.uniform(0.16, 0.21);
  const double margin = m.radius * 1.7 + 4.0;
  m.cy = rs.uniform(margin, cfg.frame_height - 1 - margin);
  m.cx = rs.uniform(margin, cfg.frame_width - 1 - margin);
  const double drift_angle = rs.uniform(0.0, 2.0 * kPi);
  const double drift_speed = rs.uniform(0.05, 0.15);
  m.vy = drift_speed * std::sin(drift_angle);
  m.vx = drift_speed * std::cos(drift_angle);
  return m;
}

Pose pose_at(const Motion& m, const GeneratorConfig& cfg, double t) {
  Pose p;
  p.cy = m.cy + m.vy * t;
  p.cx = m.cx + m.vx * t;
  const double w = m.speed * t + m.phase;
  for (int j = 0; j < 4; ++j) {
    const double a0 = m.phase + j * kPi / 2.0;
    double ang = a0, rad = m.radius;
    switch (m.family) {
      case 0:  // orbit clockwise
        ang = a0 + m.speed * t;
        break;
      case 1:  // orbit counterclockwise (time reversal of family 0)
        ang = a0 - m.speed * t;
        break;
      case 2:  // radial pulse
        rad = m.radius * (0.55 + 0.45 * std::sin(w));
        break;
      case 3:  // scissor: limbs oscillate through the center along one axis
        rad = m.radius * std::sin(w + j * kPi / 2.0);
        ang = (j % 2) ? kPi / 2.0 : 0.0;
        break;
      case 4:  // rotating bar: collinear limbs
        ang = m.phase + m.speed * 0.8 * t;
        rad = m.radius * (j < 2 ? (j + 1) * 0.5 : -(j - 1) * 0.5);
        break;
      case 5:  // lissajous
      default: {
        const double u = m.speed * 0.9 * t + j * kPi / 2.0;
        p.ly[j] = p.cy + m.radius * std::sin(u + m.phase);
        p.lx[j] = p.cx + m.radius * 0.8 * std::sin(2.0 * u + m.phase);
        continue;
      }
    }
    p.ly[j] = p.cy + rad * std::sin(ang);
    p.lx[j] = p.cx + rad * std::cos(ang);
  }
  auto clampy = [&](double v) {
    return std::min(std::max(v, 0.0), (double)cfg.frame_height - 1);
  };
  auto clampx = [&](double v) {
    return std::min(std::max(v, 0.0), (double)cfg.frame_width - 1);
  };
  p.cy = clampy(p.cy);
  p.cx = clampx(p.cx);
  for (int j = 0; j < 4; ++j) {
    p.ly[j] = clampy(p.ly[j]);
    p.lx[j] = clampx(p.lx[j]);
  }
  return p;
}

void render_blob(std::vector<double>& img, int H, int W, double cy, double cx,
                 double amp, double sigma) {
  const int r = (int)std::ceil(3.0 * sigma);
  const int y0 = std::max(0, (int)std::floor(cy) - r);
  const int y1 = std::min(H - 1, (int)std::ceil(cy) + r);
  const int x0 = std::max(0, (int)std::floor(cx) - r);
  const int x1 = std::min(W - 1, (int)std::ceil(cx) + r);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y - cy, dx = x - cx;
      img[(size_t)y * W + x] += amp * std::exp(-(dy * dy + dx * dx) * inv);
    }
}

void render_frame(const GeneratorConfig& cfg, const std::vector<Pose>& poses,
                  rng::Stream& noise_rs, uint8_t* out, double* kp_out) {
  const int H = cfg.frame_height, W = cfg.frame_width;
  std::vector<double> img((size_t)H * W);
  for (auto& v : img) v = 0.06 + cfg.intensity_noise_std * noise_rs.normal();
  for (const auto& p : poses) {
    render_blob(img, H, W, p.cy, p.cx, 0.55, 2.6);
    for (int j = 0; j < 4; ++j)
      render_blob(img, H, W, p.ly[j], p.lx[j], 0.85, 1.7);
  }
  for (size_t i = 0; i < img.size(); ++i) {
    double v = std::min(std::max(img[i], 0.0), 1.0);
    out[i] = (uint8_t)std::lround(v * 255.0);
  }
  for (const auto& p : poses) {
    *kp_out++ = p.cy;
    *kp_out++ = p.cx;
    for (int j = 0; j < 4; ++j) {
      *kp_out++ = p.ly[j];
      *kp_out++ = p.lx[j];
    }
  }
}

std::vector<Motion> draw_actors(const GeneratorConfig& cfg, int class_id,
                                rng::Stream& rs) {
  std::vector<Motion> ms;
  for (int a = 0; a < cfg.actors_per_clip; ++a)
    ms.push_back(draw_motion(cfg, class_id, rs));
  return ms;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_classes < 2)
    throw std::invalid_argument("generator: num_classes must be >= 2");
  if (min_clip_len < 1)
    throw std::invalid_argument("generator: min_clip_len must be >= 1");
  if (min_clip_len > max_clip_len)
    throw std::invalid_argument("generator: min_clip_len > max_clip_len");
  if (frame_height < 16 || frame_width < 16)
    throw std::invalid_argument("generator: frame dims must be >= 16");
  if (gap_len_min < 0 || gap_len_min > gap_len_max)
    throw std::invalid_argument("generator: bad gap_len range");
  if (actors_per_clip != 1 && actors_per_clip != 2)
    throw std::invalid_argument("generator: actors_per_clip must be 1 or 2");
}

LabeledClip gen_clip(const GeneratorConfig& config, int class_id,
                     uint64_t seed) {
  config.validate();
  if (class_id < 0 || class_id >= config.num_classes)
    throw std::invalid_argument("gen_clip: class_id out of range");
  rng::Stream rs(rng::derive(config.seed, {0x11u, (uint64_t)class_id, seed}));
  const int N =
      config.min_clip_len +
      (int)rs.next_below(config.max_clip_len - config.min_clip_len + 1);
  auto motions = draw_actors(config, class_id, rs);

  LabeledClip clip;
  clip.label = class_id;
  Video& v = clip.video;
  v.height = config.frame_height;
  v.width = config.frame_width;
  v.joints = kJointsPerActor * config.actors_per_clip;
  v.frames.resize((size_t)N * v.height * v.width);
  v.keypoints.resize((size_t)N * v.joints * 2);
  for (int t = 0; t < N; ++t) {
    std::vector<Pose> poses;
    for (const auto& m : motions) poses.push_back(pose_at(m, config, t));
    render_frame(config, poses, rs,
                 v.frames.data() + (size_t)t * v.height * v.width,
                 v.keypoints.data() + (size_t)t * v.joints * 2);
  }
  return clip;
}

LongSequence gen_sequence(const GeneratorConfig& config, int num_actions,
                          uint64_t seed) {
  config.validate();
  if (num_actions < 1)
    throw std::invalid_argument("gen_sequence: num_actions must be >= 1");
  rng::Stream rs(
      rng::derive(config.seed, {0x22u, (uint64_t)num_actions, seed}));

  auto gap_len = [&] {
    return config.gap_len_min +
           (int)rs.next_below(config.gap_len_max - config.gap_len_min + 1);
  };

  struct Piece {
    bool action = false;
    int label = -1;
    int len = 0;
    std::vector<Motion> motions;
    double freeze_t = 0.0;  // for gaps: pose time to hold
  };
  std::vector<Piece> pieces;
  // leading gap, actions with gaps between them, trailing gap
  pieces.push_back({false, -1, gap_len(), {}, 0.0});
  for (int a = 0; a < num_actions; ++a) {
    if (a > 0) pieces.push_back({false, -1, gap_len(), {}, 0.0});
    Piece p;
    p.action = true;
    p.label = (int)rs.next_below(config.num_classes);
    p.len = config.min_clip_len +
            (int)rs.next_below(config.max_clip_len - config.min_clip_len + 1);
    p.motions = draw_actors(config, p.label, rs);
    pieces.push_back(std::move(p));
  }
  pieces.push_back({false, -1, gap_len(), {}, 0.0});

  // Gaps hold a frozen pose: the end pose of the previous action, or the
  // start pose of the next one for the leading gap.
  for (size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].action) continue;
    if (i > 0 && pieces[i - 1].action) {
      pieces[i].motions = pieces[i - 1].motions;
      pieces[i].freeze_t = pieces[i - 1].len - 1;
    } else if (i + 1 < pieces.size() && pieces[i + 1].action) {
      pieces[i].motions = pieces[i + 1].motions;
      pieces[i].freeze_t = 0.0;
    }
  }

  int N = 0;
  for (const auto& p : pieces) N += p.len;

  LongSequence seq;
  Video& v = seq.video;
  v.height = config.frame_height;
  v.width = config.frame_width;
  v.joints = kJointsPerActor * config.actors_per_clip;
  v.frames.resize((size_t)N * v.height * v.width);
  v.keypoints.resize((size_t)N * v.joints * 2);

  int t = 0;
  for (const auto& p : pieces) {
    if (p.action) seq.intervals.push_back({t, t + p.len, p.label});
    for (int i = 0; i < p.len; ++i, ++t) {
      const double local = p.action ? (double)i : p.freeze_t;
      std::vector<Pose> poses;
      for (const auto& m : p.motions)
        poses.push_back(pose_at(m, config, local));
      render_frame(config, poses, rs,
                   v.frames.data() + (size_t)t * v.height * v.width,
                   v.keypoints.data() + (size_t)t * v.joints * 2);
    }
  }
  return seq;
}

Video slice_video(const Video& v, int start, int end) {
  if (start < 0 || end > v.num_frames() || start >= end)
    throw std::invalid_argument("slice_video: bad range");
  Video out;
  out.height = v.height;
  out.width = v.width;
  out.joints = v.joints;
  const size_t fsz = (size_t)v.height * v.width;
  out.frames.assign(v.frames.begin() + (size_t)start * fsz,
                    v.frames.begin() + (size_t)end * fsz);
  const size_t ksz = (size_t)v.joints * 2;
  out.keypoints.assign(v.keypoints.begin() + (size_t)start * ksz,
                       v.keypoints.begin() + (size_t)end * ksz);
  return out;
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

namespace {

DatasetSplits split_train_val_test(int num_train, int num_test) {
  DatasetSplits s;
  // 5% of the training items (at least 1) become validation
  const int num_val = std::max(1, (int)std::floor(0.05 * num_train));
  for (int i = 0; i < num_train - num_val; ++i) s.train.push_back(i);
  for (int i = num_train - num_val; i < num_train; ++i) s.val.push_back(i);
  for (int i = num_train; i < num_train + num_test; ++i) s.test.push_back(i);
  return s;
}

}  // namespace

ClipDataset make_clip_dataset(const GeneratorConfig& config, int num_train,
                              int num_test) {
  config.validate();
  if (num_train < 2 || num_test < 1)
    throw std::invalid_argument("make_clip_dataset: too few items");
  ClipDataset ds;
  ds.config = config;
  const int total = num_train + num_test;
  ds.items.resize(total);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i)
    ds.items[i] = gen_clip(config, i % config.num_classes, (uint64_t)i);
  ds.splits = split_train_val_test(num_train, num_test);
  return ds;
}

SequenceDataset make_sequence_dataset(const GeneratorConfig& config,
                                      int num_train, int num_test,
                                      int actions_per_sequence) {
  config.validate();
  SequenceDataset ds;
  ds.config = config;
  const int total = num_train + num_test;
  ds.items.resize(total);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i)
    ds.items[i] = gen_sequence(config, actions_per_sequence, (uint64_t)i);
  ds.splits = split_train_val_test(num_train, num_test);
  return ds;
}

// ---------------------------------------------------------------------------
// storage
// ---------------------------------------------------------------------------

namespace {

constexpr char kItemMagic[4] = {'O', 'K', 'D', 'V'};

void put_i32(std::ofstream& f, int32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

int32_t get_i32(std::ifstream& f, const std::string& path) {
  int32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4))
    throw std::runtime_error("corrupt item file: " + path);
  return v;
}

void write_item(const std::string& path, const Video& v, int label,
                const std::vector<ActionInterval>* intervals) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write item file: " + path);
  f.write(kItemMagic, 4);
  put_i32(f, 1);  // version
  put_i32(f, intervals ? 1 : 0);
  put_i32(f, v.num_frames());
  put_i32(f, v.height);
  put_i32(f, v.width);
  put_i32(f, v.joints);
  if (intervals) {
    put_i32(f, (int32_t)intervals->size());
    for (const auto& iv : *intervals) {
      put_i32(f, iv.start_frame);
      put_i32(f, iv.end_frame);
      put_i32(f, iv.label);
    }
  } else {
    put_i32(f, label);
  }
  f.write(reinterpret_cast<const char*>(v.frames.data()),
          (std::streamsize)v.frames.size());
  f.write(reinterpret_cast<const char*>(v.keypoints.data()),
          (std::streamsize)(v.keypoints.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write on item file: " + path);
}

void read_item(const std::string& path, Video& v, int* label,
               std::vector<ActionInterval>* intervals) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing item file: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kItemMagic, 4) != 0)
    throw std::runtime_error("corrupt item file (bad magic): " + path);
  const int version = get_i32(f, path);
  if (version != 1)
    throw std::runtime_error("unsupported item version in " + path);
  const int kind = get_i32(f, path);
  const int N = get_i32(f, path);
  v.height = get_i32(f, path);
  v.width = get_i32(f, path);
  v.joints = get_i32(f, path);
  if (kind == 1) {
    if (!intervals)
      throw std::runtime_error("item kind mismatch (sequence) in " + path);
    const int M = get_i32(f, path);
    intervals->resize(M);
    for (auto& iv : *intervals) {
      iv.start_frame = get_i32(f, path);
      iv.end_frame = get_i32(f, path);
      iv.label = get_i32(f, path);
    }
  } else {
    if (!label)
      throw std::runtime_error("item kind mismatch (clip) in " + path);
    *label = get_i32(f, path);
  }
  v.frames.resize((size_t)N * v.height * v.width);
  v.keypoints.resize((size_t)N * v.joints * 2);
  if (!f.read(reinterpret_cast<char*>(v.frames.data()),
              (std::streamsize)v.frames.size()) ||
      !f.read(reinterpret_cast<char*>(v.keypoints.data()),
              (std::streamsize)(v.keypoints.size() * sizeof(double))))
    throw std::runtime_error("truncated item file: " + path);
}

json config_to_json(const GeneratorConfig& c) {
  json j;
  j["num_classes"] = c.num_classes;
  j["frame_height"] = c.frame_height;
  j["frame_width"] = c.frame_width;
  j["min_clip_len"] = c.min_clip_len;
  j["max_clip_len"] = c.max_clip_len;
  j["gap_len_min"] = c.gap_len_min;
  j["gap_len_max"] = c.gap_len_max;
  j["actors_per_clip"] = c.actors_per_clip;
  j["intensity_noise_std"] = c.intensity_noise_std;
  j["seed"] = c.seed;
  return j;
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig c;
  c.num_classes = j.at("num_classes");
  c.frame_height = j.at("frame_height");
  c.frame_width = j.at("frame_width");
  c.min_clip_len = j.at("min_clip_len");
  c.max_clip_len = j.at("max_clip_len");
  c.gap_len_min = j.at("gap_len_min");
  c.gap_len_max = j.at("gap_len_max");
  c.actors_per_clip = j.at("actors_per_clip");
  c.intensity_noise_std = j.at("intensity_noise_std");
  c.seed = j.at("seed");
  return c;
}

json splits_to_json(const DatasetSplits& s) {
  return json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

DatasetSplits splits_from_json(const json& j) {
  DatasetSplits s;
  s.train = j.at("train").get<std::vector<int>>();
  s.val = j.at("val").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  return s;
}

std::string item_filename(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "items/%06d.okv", i);
  return buf;
}

json load_manifest(const std::string& dir) {
  const std::string path = dir + "/manifest.json";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing dataset manifest: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt dataset manifest " + path + ": " +
                             e.what());
  }
  return j;
}

void write_manifest(const std::string& dir, const json& j) {
  fs::create_directories(dir);
  std::ofstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

}  // namespace

void write_dataset(const ClipDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "items");
  json manifest;
  manifest["format"] = "okdad-dataset";
  manifest["version"] = 1;
  manifest["kind"] = "clips";
  manifest["generator"] = config_to_json(ds.config);
  json items = json::array();
  for (size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    write_item(dir + "/" + item_filename((int)i), it.video, it.label, nullptr);
    items.push_back({{"file", item_filename((int)i)},
                     {"label", it.label},
                     {"frames", it.video.num_frames()}});
  }
  manifest["items"] = items;
  manifest["splits"] = splits_to_json(ds.splits);
  write_manifest(dir, manifest);
}

void write_dataset(const SequenceDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "items");
  json manifest;
  manifest["format"] = "okdad-dataset";
  manifest["version"] = 1;
  manifest["kind"] = "sequences";
  manifest["generator"] = config_to_json(ds.config);
  json items = json::array();
  for (size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    write_item(dir + "/" + item_filename((int)i), it.video, 0, &it.intervals);
    json ivs = json::array();
    for (const auto& iv : it.intervals)
      ivs.push_back({iv.start_frame, iv.end_frame, iv.label});
    items.push_back({{"file", item_filename((int)i)},
                     {"intervals", ivs},
                     {"frames", it.video.num_frames()}});
  }
  manifest["items"] = items;
  manifest["splits"] = splits_to_json(ds.splits);
  write_manifest(dir, manifest);
}

ClipDataset load_clip_dataset(const std::string& dir) {
  json manifest = load_manifest(dir);
  if (manifest.value("kind", "") != "clips")
    throw std::runtime_error("dataset in " + dir + " is not a clip dataset");
  ClipDataset ds;
  ds.config = config_from_json(manifest.at("generator"));
  ds.splits = splits_from_json(manifest.at("splits"));
  const auto& items = manifest.at("items");
  ds.items.resize(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string file = items[i].at("file");
    read_item(dir + "/" + file, ds.items[i].video, &ds.items[i].label,
              nullptr);
  }
  return ds;
}

SequenceDataset load_sequence_dataset(const std::string& dir) {
  json manifest = load_manifest(dir);
  if (manifest.value("kind", "") != "sequences")
    throw std::runtime_error("dataset in " + dir +
                             " is not a sequence dataset");
  SequenceDataset ds;
  ds.config = config_from_json(manifest.at("generator"));
  ds.splits = splits_from_json(manifest.at("splits"));
  const auto& items = manifest.at("items");
  ds.items.resize(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string file = items[i].at("file");
    read_item(dir + "/" + file, ds.items[i].video, nullptr,
              &ds.items[i].intervals);
  }
  return ds;
}

std::string dataset_kind(const std::string& dir) {
  return load_manifest(dir).value("kind", "");
}

uint64_t dataset_hash(const std::string& dir) {
  const std::string path = dir + "/manifest.json";
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing dataset manifest: " + path);
  uint64_t h = 1469598103934665603ull;
  char c;
  while (f.get(c)) {
    h ^= (uint8_t)c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace okdad::synthvid
