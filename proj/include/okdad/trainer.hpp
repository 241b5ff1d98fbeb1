#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "okdad/losses.hpp"
#include "okdad/nets.hpp"
#include "okdad/rng.hpp"
#include "okdad/synthvid.hpp"
#include "okdad/tensor.hpp"

namespace okdad::trainer {

enum class Stage { teacher, student, okdad };

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);

enum class GatingSource { labels, predictions };

struct TrainConfig {
  Stage stage = Stage::teacher;
  int batch_size = 16;          // teacher default; students use 32
  double learning_rate = 1e-4;  // teacher default; students use 1e-3
  int epochs = 10;
  uint64_t seed = 0;
  double r_min = 0.025;
  losses::TeacherLossConfig teacher_loss;
  losses::StudentLossConfig student_loss;
  // layer reuse / freezing
  bool init_backbone_from_teacher = true;  // students; false = random init
  bool freeze_backbone = false;            // baseline: frozen generic extractor
  int window_blocks = 40;                  // okdad training window T
  GatingSource gating_source = GatingSource::labels;
  nets::ModelConfig model;

  void validate() const;
};

/// Adam with standard moment coefficients (b1 0.9, b2 0.999, eps 1e-8),
/// applied to the trainable parameters only.
struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<ad::Parameter*> params;
  std::vector<Tensor> m, v;

  Adam(double lr_, std::vector<ad::Parameter*> trainable);
  void zero_grads();
  void step();
};

/// Draw u ~ Uniform[r_min, 2] and clip at 1: full sequences are favored
/// with probability (2-1)/(2-r_min).
double sample_training_ratio(rng::Stream& rs, double r_min);

// ---------------------------------------------------------------------------
// teacher feature cache
// ---------------------------------------------------------------------------

/// Teacher targets for one clip (or one action of a sequence): x_p and the
/// teacher error at every block horizon t = 1..T_on, computed in eval mode
/// with deterministic offline sampling at N_partial = min(t*s*delta, N).
struct CacheEntry {
  std::vector<Tensor> x_p;
  std::vector<double> epsilon;
};

struct TeacherFeatureCache {
  uint64_t dataset_hash = 0;
  uint64_t checkpoint_hash = 0;  // 0 when built in memory
  int stride = 3;
  int delta = 5;
  int feature_dim = 0;
  std::vector<CacheEntry> clips;                    // clip datasets
  std::vector<std::vector<CacheEntry>> sequences;   // per sequence, per action
};

TeacherFeatureCache build_teacher_cache(nets::Model& teacher,
                                        const synthvid::ClipDataset& ds,
                                        uint64_t dataset_hash);
TeacherFeatureCache build_teacher_cache(nets::Model& teacher,
                                        const synthvid::SequenceDataset& ds,
                                        uint64_t dataset_hash);

void save_cache(const TeacherFeatureCache& cache, const std::string& path);
TeacherFeatureCache load_cache(const std::string& path);

// ---------------------------------------------------------------------------
// training runs
// ---------------------------------------------------------------------------

struct TrainOutcome {
  int64_t steps = 0;
  double best_metric = 0;       // validation metric of the saved checkpoint
  int best_epoch = -1;
  double first_epoch_loss = 0;  // mean training loss of the first epoch
  double last_epoch_loss = 0;
  std::string best_checkpoint;  // path under run_dir
};

/// Offline early-prediction teacher: random observation ratio per batch,
/// random subwindow sampling, batch-norm in training mode. Checkpoint with
/// the best validation accuracy at r=1 is kept. Writes log.csv and
/// checkpoints/ under run_dir.
TrainOutcome train_teacher(const synthvid::ClipDataset& ds,
                           const TrainConfig& cfg, const std::string& run_dir);

/// Online early-prediction student distilled from a teacher: backbone
/// initialized from the teacher (optionally frozen), classifier reused and
/// frozen, all blocks of each clip processed through the classification LSTM,
/// student loss against cached teacher targets.
TrainOutcome train_student(const synthvid::ClipDataset& ds,
                           const nets::Model& teacher,
                           const TeacherFeatureCache& cache,
                           const TrainConfig& cfg, const std::string& run_dir);

/// Online detector: random windows of window_blocks blocks, actionness BCE
/// plus per-action student terms, memory gating by ground-truth actionness
/// (teacher forcing) or by predicted probability.
TrainOutcome train_okdad(const synthvid::SequenceDataset& ds,
                         const nets::Model& teacher,
                         const TeacherFeatureCache& cache,
                         const TrainConfig& cfg, const std::string& run_dir);

}  // namespace okdad::trainer
