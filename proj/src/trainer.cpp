#include "okdad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "okdad/checkpoint.hpp"
#include "okdad/metrics.hpp"
#include "okdad/runtime.hpp"
#include "okdad/sampling.hpp"

namespace okdad::trainer {

namespace fs = std::filesystem;
using ad::Var;

Stage stage_from_string(const std::string& s) {
  if (s == "teacher") return Stage::teacher;
  if (s == "student") return Stage::student;
  if (s == "okdad") return Stage::okdad;
  throw std::invalid_argument("unknown training stage: " + s);
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::teacher: return "teacher";
    case Stage::student: return "student";
    case Stage::okdad: return "okdad";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (stage == Stage::teacher && batch_size < 2)
    throw std::invalid_argument(
        "trainer: teacher batch_size must be >= 2 (batch norm)");
  if (batch_size < 1) throw std::invalid_argument("trainer: bad batch_size");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("trainer: learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("trainer: epochs must be >= 1");
  if (!(r_min > 0.0 && r_min <= 1.0))
    throw std::invalid_argument("trainer: r_min must be in (0,1]");
  if (window_blocks < 1)
    throw std::invalid_argument("trainer: window_blocks must be >= 1");
  teacher_loss.validate();
  student_loss.validate();
}

Adam::Adam(double lr_, std::vector<ad::Parameter*> trainable)
    : lr(lr_), params(std::move(trainable)) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (auto* p : params) {
    m.emplace_back(p->value.shape);
    v.emplace_back(p->value.shape);
  }
}

void Adam::zero_grads() {
  for (auto* p : params) p->grad.fill(0.0);
}

void Adam::step() {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, (double)t);
  const double bc2 = 1.0 - std::pow(beta2, (double)t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    for (int64_t k = 0; k < p->value.numel(); ++k) {
      const double g = p->grad[k];
      m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * g;
      v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * g * g;
      p->value[k] -= lr * (m[i][k] / bc1) / (std::sqrt(v[i][k] / bc2) + eps);
    }
  }
}

double sample_training_ratio(rng::Stream& rs, double r_min) {
  if (!(r_min > 0.0 && r_min <= 1.0))
    throw std::invalid_argument("sample_training_ratio: bad r_min");
  return std::min(rs.uniform(r_min, 2.0), 1.0);
}

// ---------------------------------------------------------------------------
// cache
// ---------------------------------------------------------------------------

namespace {

CacheEntry cache_entry_for(nets::Model& teacher, const synthvid::Video& video,
                           int label, int stride, int delta) {
  CacheEntry e;
  const int N = video.num_frames();
  const int T_on =
      sampling::num_blocks(sampling::strided_count(N, stride), delta);
  e.x_p.reserve(T_on);
  e.epsilon.reserve(T_on);
  for (int t = 1; t <= T_on; ++t) {
    const int n_partial = std::min(t * stride * delta, N);
    auto [feat, dist] = runtime::teacher_feature_at(teacher, video, n_partial);
    e.epsilon.push_back(losses::teacher_error(dist, label));
    e.x_p.push_back(std::move(feat));
  }
  return e;
}

}  // namespace

TeacherFeatureCache build_teacher_cache(nets::Model& teacher,
                                        const synthvid::ClipDataset& ds,
                                        uint64_t dataset_hash) {
  TeacherFeatureCache cache;
  cache.dataset_hash = dataset_hash;
  cache.stride = teacher.cfg.stride;
  cache.delta = teacher.cfg.delta;
  cache.feature_dim = teacher.cfg.backbone.feature_dim;
  cache.clips.resize(ds.items.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < ds.items.size(); ++i)
    cache.clips[i] = cache_entry_for(teacher, ds.items[i].video,
                                     ds.items[i].label, cache.stride,
                                     cache.delta);
  return cache;
}

TeacherFeatureCache build_teacher_cache(nets::Model& teacher,
                                        const synthvid::SequenceDataset& ds,
                                        uint64_t dataset_hash) {
  TeacherFeatureCache cache;
  cache.dataset_hash = dataset_hash;
  cache.stride = teacher.cfg.stride;
  cache.delta = teacher.cfg.delta;
  cache.feature_dim = teacher.cfg.backbone.feature_dim;
  cache.sequences.resize(ds.items.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < ds.items.size(); ++i) {
    const auto& seq = ds.items[i];
    auto owners = runtime::block_owners(seq.intervals,
                                        seq.video.num_frames(), cache.stride,
                                        cache.delta);
    auto& per_action = cache.sequences[i];
    per_action.resize(seq.intervals.size());
    for (size_t a = 0; a < seq.intervals.size(); ++a) {
      int owned = 0;
      for (int o : owners) owned += (o == (int)a);
      if (owned == 0) continue;  // action too short to own a block
      const auto& iv = seq.intervals[a];
      auto sub = synthvid::slice_video(seq.video, iv.start_frame,
                                       iv.end_frame);
      // horizons local to the action, capped at its length
      CacheEntry e;
      const int len = iv.end_frame - iv.start_frame;
      for (int t = 1; t <= owned; ++t) {
        const int n_partial = std::min(t * cache.stride * cache.delta, len);
        auto [feat, dist] = runtime::teacher_feature_at(teacher, sub,
                                                        n_partial);
        e.epsilon.push_back(losses::teacher_error(dist, iv.label));
        e.x_p.push_back(std::move(feat));
      }
      per_action[a] = std::move(e);
    }
  }
  return cache;
}

namespace {
constexpr char kCacheMagic[4] = {'O', 'K', 'D', 'F'};
}

void save_cache(const TeacherFeatureCache& cache, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(path).parent_path());
  nlohmann::ordered_json manifest;
  manifest["format"] = "okdad-cache";
  manifest["dataset_hash"] = cache.dataset_hash;
  manifest["checkpoint_hash"] = cache.checkpoint_hash;
  manifest["stride"] = cache.stride;
  manifest["delta"] = cache.delta;
  manifest["feature_dim"] = cache.feature_dim;
  manifest["kind"] = cache.sequences.empty() ? "clips" : "sequences";
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  if (cache.sequences.empty()) {
    for (const auto& e : cache.clips) items.push_back((int)e.x_p.size());
  } else {
    for (const auto& seq : cache.sequences) {
      nlohmann::ordered_json actions = nlohmann::ordered_json::array();
      for (const auto& e : seq) actions.push_back((int)e.x_p.size());
      items.push_back(actions);
    }
  }
  manifest["items"] = items;
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write cache: " + path);
  f.write(kCacheMagic, 4);
  const uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t mlen = mtext.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mtext.data(), (std::streamsize)mtext.size());
  auto write_entry = [&](const CacheEntry& e) {
    for (size_t t = 0; t < e.x_p.size(); ++t) {
      f.write(reinterpret_cast<const char*>(e.x_p[t].ptr()),
              (std::streamsize)(e.x_p[t].numel() * sizeof(double)));
      f.write(reinterpret_cast<const char*>(&e.epsilon[t]), sizeof(double));
    }
  };
  for (const auto& e : cache.clips) write_entry(e);
  for (const auto& seq : cache.sequences)
    for (const auto& e : seq) write_entry(e);
  if (!f) throw std::runtime_error("short write on cache: " + path);
}

TeacherFeatureCache load_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing cache file: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t mlen = 0;
  if (!f.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw std::runtime_error("not a cache file: " + path);
  if (!f.read(reinterpret_cast<char*>(&version), 4) || version != 1)
    throw std::runtime_error("unsupported cache version: " + path);
  if (!f.read(reinterpret_cast<char*>(&mlen), 8))
    throw std::runtime_error("corrupt cache header: " + path);
  std::string mtext(mlen, '\0');
  if (!f.read(mtext.data(), (std::streamsize)mlen))
    throw std::runtime_error("corrupt cache manifest: " + path);
  auto manifest = nlohmann::ordered_json::parse(mtext);
  if (manifest.value("format", "") != "okdad-cache")
    throw std::runtime_error("wrong cache format in " + path);
  TeacherFeatureCache cache;
  cache.dataset_hash = manifest.at("dataset_hash");
  cache.checkpoint_hash = manifest.at("checkpoint_hash");
  cache.stride = manifest.at("stride");
  cache.delta = manifest.at("delta");
  cache.feature_dim = manifest.at("feature_dim");
  const int D = cache.feature_dim;
  auto read_entry = [&](int steps) {
    CacheEntry e;
    for (int t = 0; t < steps; ++t) {
      Tensor feat({D});
      double eps = 0;
      if (!f.read(reinterpret_cast<char*>(feat.ptr()),
                  (std::streamsize)(D * sizeof(double))) ||
          !f.read(reinterpret_cast<char*>(&eps), sizeof(double)))
        throw std::runtime_error("truncated cache data: " + path);
      e.x_p.push_back(std::move(feat));
      e.epsilon.push_back(eps);
    }
    return e;
  };
  if (manifest.value("kind", "") == "clips") {
    for (const auto& steps : manifest.at("items"))
      cache.clips.push_back(read_entry(steps.get<int>()));
  } else {
    for (const auto& actions : manifest.at("items")) {
      std::vector<CacheEntry> seq;
      for (const auto& steps : actions)
        seq.push_back(read_entry(steps.get<int>()));
      cache.sequences.push_back(std::move(seq));
    }
  }
  return cache;
}

// ---------------------------------------------------------------------------
// shared run machinery
// ---------------------------------------------------------------------------

namespace {

std::vector<int> shuffled(std::vector<int> v, rng::Stream rs) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[(size_t)rs.next_below((int64_t)i)]);
  return v;
}

struct RunLog {
  std::ofstream f;

  explicit RunLog(const std::string& run_dir) {
    fs::create_directories(run_dir);
    fs::create_directories(run_dir + "/checkpoints");
    f.open(run_dir + "/log.csv");
    if (!f) throw std::runtime_error("cannot write log.csv in " + run_dir);
    f << "step,epoch,loss,loss_ce,loss_sim,loss_dis,lr,wall_ms\n";
  }

  void row(int64_t step, int epoch, double loss, double ce, double sim,
           double dis, double lr, double wall_ms) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                  (long long)step, epoch, loss, ce, sim, dis, lr, wall_ms);
    f << buf;
  }
};

struct FreezeGuard {
  std::vector<std::pair<ad::Parameter*, std::vector<double>>> snapshot;

  void capture(const std::vector<ad::Parameter*>& params) {
    for (auto* p : params)
      if (!p->trainable) snapshot.emplace_back(p, p->value.data);
  }

  void verify() const {
    for (const auto& [p, bytes] : snapshot)
      if (p->value.data != bytes)
        throw std::logic_error("frozen parameter was updated: " + p->name);
  }
};

void check_finite(double loss, int64_t step) {
  if (!std::isfinite(loss))
    throw std::runtime_error(
        "training diverged: non-finite loss at step " + std::to_string(step));
}

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// Copies same-named parameters (by prefix) from one model into another.
void copy_params(const nets::Model& src, nets::Model& dst,
                 const std::string& prefix) {
  for (const auto& p : src.store.params) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    auto* q = dst.store.find(p->name);
    if (!q)
      throw std::logic_error("parameter missing in target model: " + p->name);
    if (q->value.shape != p->value.shape)
      throw std::logic_error("parameter shape mismatch on reuse: " + p->name);
    q->value = p->value;
  }
}

struct CheckpointKeeper {
  std::string run_dir;
  double best_metric = -1.0;
  int best_epoch = -1;

  bool offer(const nets::Model& model, int epoch, int64_t step,
             double metric) {
    nlohmann::ordered_json snap{{"epoch", epoch}, {"metric", metric}};
    checkpoint::save_model(model, run_dir + "/checkpoints/last.okc", step,
                           snap);
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      checkpoint::save_model(model, run_dir + "/checkpoints/best.okc", step,
                             snap);
      return true;
    }
    return false;
  }
};

// One student forward over all blocks of a clip: batched backbone call, then
// the classification recurrence. Returns per-step logits and x_c.
struct StudentForward {
  std::vector<Var> logits;
  std::vector<Var> x_c;
};

StudentForward student_forward(const nets::Model& model,
                               const std::vector<sampling::Block>& blocks) {
  const auto& bb = model.cfg.backbone;
  const int T = (int)blocks.size();
  Tensor x({T, model.cfg.delta, 1, bb.in_h, bb.in_w});
  const int64_t bsz = (int64_t)model.cfg.delta * bb.in_h * bb.in_w;
  for (int t = 0; t < T; ++t)
    std::copy(blocks[t].frames.data.begin(), blocks[t].frames.data.end(),
              x.data.begin() + t * bsz);
  auto feats = model.features(ad::constant(std::move(x)));
  StudentForward out;
  auto h = ad::constant(Tensor({model.cfg.class_hidden}));
  auto c = ad::constant(Tensor({model.cfg.class_hidden}));
  for (int t = 0; t < T; ++t) {
    auto feat = ad::slice(feats, (int64_t)t * bb.feature_dim, bb.feature_dim);
    auto step = model.class_step(feat, h, c);
    h = step.h;
    c = step.c;
    out.logits.push_back(step.logits);
    out.x_c.push_back(step.x_c);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// teacher
// ---------------------------------------------------------------------------

TrainOutcome train_teacher(const synthvid::ClipDataset& ds,
                           const TrainConfig& cfg,
                           const std::string& run_dir) {
  cfg.validate();
  if (cfg.model.kind != nets::ModelKind::teacher)
    throw std::invalid_argument("train_teacher: model kind must be teacher");
  auto model = nets::Model::build(cfg.model, cfg.seed);
  Adam adam(cfg.learning_rate, model.store.all());
  RunLog log(run_dir);
  CheckpointKeeper keeper{run_dir};
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t root = rng::derive(cfg.seed, {0x7EAC});
  const auto crop = runtime::crop_config(cfg.model);

  TrainOutcome outcome;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order =
        shuffled(ds.splits.train, rng::Stream(rng::derive(root, {1, (uint64_t)epoch})));
    double epoch_loss = 0;
    int epoch_batches = 0;
    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const int B = (int)std::min<size_t>(cfg.batch_size, order.size() - pos);
      if (B < 2) break;  // batch norm needs at least 2; drop the remainder
      rng::Stream batch_rs(rng::derive(root, {2, (uint64_t)epoch, (uint64_t)pos}));
      const double r = sample_training_ratio(batch_rs, cfg.r_min);

      Tensor x({B, crop.t_off, 1, crop.out_height, crop.out_width});
      std::vector<int> labels(B);
      const int64_t isz =
          (int64_t)crop.t_off * crop.out_height * crop.out_width;
#pragma omp parallel for schedule(dynamic)
      for (int b = 0; b < B; ++b) {
        const auto& clip = ds.items[(size_t)order[pos + b]];
        labels[b] = clip.label;
        const int n_partial =
            sampling::truncate_ratio(clip.video.num_frames(), r);
        rng::Stream clip_rs(
            rng::derive(root, {3, (uint64_t)epoch, (uint64_t)(pos + b)}));
        Tensor stack =
            sampling::sample_offline(clip.video, n_partial, crop, &clip_rs);
        std::copy(stack.data.begin(), stack.data.end(),
                  x.data.begin() + (int64_t)b * isz);
      }

      auto x_p = model.teacher_features(ad::constant(std::move(x)), true);
      auto logits = model.classifier_logits(x_p);
      losses::TeacherLossBreakdown bd;
      auto loss =
          losses::teacher_loss(x_p, logits, labels, r, cfg.teacher_loss, &bd);
      check_finite(loss->value[0], step);
      adam.zero_grads();
      ad::backward(loss);
      adam.step();
      ++step;
      epoch_loss += loss->value[0];
      ++epoch_batches;
      log.row(step, epoch, loss->value[0], bd.cross_entropy, bd.similarity,
              bd.dissimilarity, cfg.learning_rate, elapsed_ms(t0));
    }
    epoch_loss /= std::max(1, epoch_batches);
    if (epoch == 0) outcome.first_epoch_loss = epoch_loss;
    outcome.last_epoch_loss = epoch_loss;

    // checkpoint selection: accuracy at full observation on the val split
    const double val_acc =
        metrics::accuracy_at_ratios(model, ds, ds.splits.val, {1.0})[0];
    keeper.offer(model, epoch, step, val_acc);
  }
  outcome.steps = step;
  outcome.best_metric = keeper.best_metric;
  outcome.best_epoch = keeper.best_epoch;
  outcome.best_checkpoint = run_dir + "/checkpoints/best.okc";
  return outcome;
}

// ---------------------------------------------------------------------------
// student
// ---------------------------------------------------------------------------

namespace {

nets::Model build_student_from_teacher(const nets::Model& teacher,
                                       const TrainConfig& cfg) {
  auto model = nets::Model::build(cfg.model, cfg.seed);
  if (cfg.init_backbone_from_teacher) copy_params(teacher, model, "backbone.");
  // the teacher's classification layer is reused and frozen
  copy_params(teacher, model, "classifier.");
  model.cls_w->trainable = false;
  model.cls_b->trainable = false;
  if (cfg.freeze_backbone)
    for (auto* p : model.store.all())
      if (p->name.rfind("backbone.", 0) == 0) p->trainable = false;
  return model;
}

std::vector<ad::Parameter*> trainable_params(const nets::Model& model) {
  std::vector<ad::Parameter*> out;
  for (auto* p : model.store.all())
    if (p->trainable) out.push_back(p);
  return out;
}

}  // namespace

TrainOutcome train_student(const synthvid::ClipDataset& ds,
                           const nets::Model& teacher,
                           const TeacherFeatureCache& cache,
                           const TrainConfig& cfg,
                           const std::string& run_dir) {
  cfg.validate();
  if (cfg.model.kind != nets::ModelKind::student)
    throw std::invalid_argument("train_student: model kind must be student");
  if (cache.clips.size() != ds.items.size())
    throw std::runtime_error("train_student: cache does not match dataset");
  if (cache.stride != cfg.model.stride || cache.delta != cfg.model.delta)
    throw std::runtime_error(
        "train_student: cache built with different s/delta");

  auto model = build_student_from_teacher(teacher, cfg);
  FreezeGuard guard;
  guard.capture(model.store.all());
  Adam adam(cfg.learning_rate, trainable_params(model));
  RunLog log(run_dir);
  CheckpointKeeper keeper{run_dir};
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t root = rng::derive(cfg.seed, {0x57D});
  const auto crop = runtime::crop_config(cfg.model);
  const auto chunk = runtime::chunk_config(cfg.model);

  TrainOutcome outcome;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled(ds.splits.train,
                          rng::Stream(rng::derive(root, {1, (uint64_t)epoch})));
    double epoch_loss = 0;
    int epoch_batches = 0;
    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const int B = (int)std::min<size_t>(cfg.batch_size, order.size() - pos);
      std::vector<Var> clip_losses(B);
      // blocks are pure functions of the clip; crop in parallel
      std::vector<std::vector<sampling::Block>> blocks(B);
#pragma omp parallel for schedule(dynamic)
      for (int b = 0; b < B; ++b)
        blocks[b] = sampling::chunk_online(
            ds.items[(size_t)order[pos + b]].video, chunk, crop);
      for (int b = 0; b < B; ++b) {
        const auto& clip = ds.items[(size_t)order[pos + b]];
        const auto& entry = cache.clips[(size_t)order[pos + b]];
        auto fwd = student_forward(model, blocks[b]);
        const int T_valid = (int)fwd.logits.size();
        clip_losses[b] =
            losses::student_loss(fwd.logits, clip.label, fwd.x_c, entry.x_p,
                                 entry.epsilon, T_valid, cfg.student_loss);
      }
      auto loss = ad::mean_of(clip_losses);
      check_finite(loss->value[0], step);
      adam.zero_grads();
      ad::backward(loss);
      adam.step();
      ++step;
      epoch_loss += loss->value[0];
      ++epoch_batches;
      log.row(step, epoch, loss->value[0], 0, 0, 0, cfg.learning_rate,
              elapsed_ms(t0));
    }
    epoch_loss /= std::max(1, epoch_batches);
    if (epoch == 0) outcome.first_epoch_loss = epoch_loss;
    outcome.last_epoch_loss = epoch_loss;

    // sigmoid-weighted accuracy at full observation on the val split
    const double val_acc =
        metrics::accuracy_at_ratios(model, ds, ds.splits.val, {1.0})[0];
    keeper.offer(model, epoch, step, val_acc);
  }
  guard.verify();
  outcome.steps = step;
  outcome.best_metric = keeper.best_metric;
  outcome.best_epoch = keeper.best_epoch;
  outcome.best_checkpoint = run_dir + "/checkpoints/best.okc";
  return outcome;
}

// ---------------------------------------------------------------------------
// okdad
// ---------------------------------------------------------------------------

TrainOutcome train_okdad(const synthvid::SequenceDataset& ds,
                         const nets::Model& teacher,
                         const TeacherFeatureCache& cache,
                         const TrainConfig& cfg, const std::string& run_dir) {
  cfg.validate();
  if (cfg.model.kind != nets::ModelKind::okdad)
    throw std::invalid_argument("train_okdad: model kind must be okdad");
  if (cache.sequences.size() != ds.items.size())
    throw std::runtime_error("train_okdad: cache does not match dataset");
  if (cache.stride != cfg.model.stride || cache.delta != cfg.model.delta)
    throw std::runtime_error("train_okdad: cache built with different s/delta");

  auto model = build_student_from_teacher(teacher, cfg);
  FreezeGuard guard;
  guard.capture(model.store.all());
  Adam adam(cfg.learning_rate, trainable_params(model));
  RunLog log(run_dir);
  CheckpointKeeper keeper{run_dir};
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t root = rng::derive(cfg.seed, {0x0DAD});
  const auto crop = runtime::crop_config(cfg.model);
  const auto chunk = runtime::chunk_config(cfg.model);
  const auto& bb = cfg.model.backbone;

  TrainOutcome outcome;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled(ds.splits.train,
                          rng::Stream(rng::derive(root, {1, (uint64_t)epoch})));
    double epoch_loss = 0;
    int epoch_batches = 0;
    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const int B = (int)std::min<size_t>(cfg.batch_size, order.size() - pos);
      std::vector<Var> seq_losses(B);
      std::vector<std::vector<sampling::Block>> blocks(B);
#pragma omp parallel for schedule(dynamic)
      for (int b = 0; b < B; ++b)
        blocks[b] = sampling::chunk_online(
            ds.items[(size_t)order[pos + b]].video, chunk, crop);
      for (int b = 0; b < B; ++b) {
        const int item = order[pos + b];
        const auto& seq = ds.items[(size_t)item];
        const int N = seq.video.num_frames();
        const auto labels = runtime::block_actionness_labels(
            seq.intervals, N, cfg.model.stride, cfg.model.delta);
        const auto owners = runtime::block_owners(
            seq.intervals, N, cfg.model.stride, cfg.model.delta);
        const int T_total = (int)blocks[b].size();

        // random window of window_blocks blocks containing a mix of action
        // and non-action blocks; shorter sequences are used whole
        int ws = 0, we = T_total;
        if (T_total > cfg.window_blocks) {
          rng::Stream wrs(rng::derive(
              root, {2, (uint64_t)epoch, (uint64_t)(pos + b)}));
          ws = (int)wrs.next_below(T_total - cfg.window_blocks + 1);
          we = ws + cfg.window_blocks;
        }

        // forward over the window
        const int Tw = we - ws;
        Tensor x({Tw, cfg.model.delta, 1, bb.in_h, bb.in_w});
        const int64_t bsz = (int64_t)cfg.model.delta * bb.in_h * bb.in_w;
        for (int t = 0; t < Tw; ++t)
          std::copy(blocks[b][(size_t)(ws + t)].frames.data.begin(),
                    blocks[b][(size_t)(ws + t)].frames.data.end(),
                    x.data.begin() + t * bsz);
        auto feats = model.features(ad::constant(std::move(x)));

        std::vector<Var> y_a(Tw);
        std::vector<Var> step_logits(Tw), step_xc(Tw);
        auto ah = ad::constant(Tensor({cfg.model.act_hidden}));
        auto ac = ad::constant(Tensor({cfg.model.act_hidden}));
        auto ch = ad::constant(Tensor({cfg.model.class_hidden}));
        auto cc = ad::constant(Tensor({cfg.model.class_hidden}));
        for (int t = 0; t < Tw; ++t) {
          auto feat =
              ad::slice(feats, (int64_t)t * bb.feature_dim, bb.feature_dim);
          auto astep = model.actionness_step(feat, ah, ac);
          ah = astep.h;
          ac = astep.c;
          y_a[t] = astep.y_a;
          Var gate = cfg.gating_source == GatingSource::labels
                         ? ad::constant_scalar(labels[(size_t)(ws + t)])
                         : astep.y_a;
          auto gated = nets::gate_memory(ch, cc, gate);
          auto cstep = model.class_step(feat, gated.first, gated.second);
          ch = cstep.h;
          cc = cstep.c;
          step_logits[t] = cstep.logits;
          step_xc[t] = cstep.x_c;
        }

        // per-action student terms on the blocks each action owns
        std::vector<losses::ActionTerm> actions;
        for (size_t a = 0; a < seq.intervals.size(); ++a) {
          int first_owned = -1;
          for (size_t t = 0; t < owners.size(); ++t)
            if (owners[t] == (int)a) {
              first_owned = (int)t;
              break;
            }
          if (first_owned < 0) continue;
          losses::ActionTerm at;
          at.label = seq.intervals[a].label;
          const auto& entry = cache.sequences[(size_t)item][a];
          for (int t = ws; t < we; ++t) {
            if (owners[(size_t)t] != (int)a) continue;
            const int local = t - first_owned;
            if (local >= (int)entry.x_p.size()) continue;
            at.step_logits.push_back(step_logits[(size_t)(t - ws)]);
            at.x_c.push_back(step_xc[(size_t)(t - ws)]);
            at.x_p.push_back(entry.x_p[(size_t)local]);
            at.epsilon.push_back(entry.epsilon[(size_t)local]);
          }
          if (!at.step_logits.empty()) actions.push_back(std::move(at));
        }

        std::vector<double> window_labels(labels.begin() + ws,
                                          labels.begin() + we);
        seq_losses[b] =
            losses::okdad_loss(y_a, window_labels, actions, cfg.student_loss);
      }
      auto loss = ad::mean_of(seq_losses);
      check_finite(loss->value[0], step);
      adam.zero_grads();
      ad::backward(loss);
      adam.step();
      ++step;
      epoch_loss += loss->value[0];
      ++epoch_batches;
      log.row(step, epoch, loss->value[0], 0, 0, 0, cfg.learning_rate,
              elapsed_ms(t0));
    }
    epoch_loss /= std::max(1, epoch_batches);
    if (epoch == 0) outcome.first_epoch_loss = epoch_loss;
    outcome.last_epoch_loss = epoch_loss;

    // checkpoint selection: detection mAP at theta 0.5 on the val split
    const double val_map =
        metrics::detection_map(model, ds, ds.splits.val, {0.5},
                               cfg.model.actionness_threshold)[0];
    keeper.offer(model, epoch, step, val_map);
  }
  guard.verify();
  outcome.steps = step;
  outcome.best_metric = keeper.best_metric;
  outcome.best_epoch = keeper.best_epoch;
  outcome.best_checkpoint = run_dir + "/checkpoints/best.okc";
  return outcome;
}

}  // namespace okdad::trainer
