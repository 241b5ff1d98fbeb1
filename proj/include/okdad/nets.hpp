#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "okdad/autodiff.hpp"
#include "okdad/rng.hpp"
#include "okdad/tensor.hpp"

namespace okdad::nets {

/// Factored spatiotemporal residual backbone. Every spatiotemporal
/// convolution is a spatial 3x3 followed by a temporal 3-tap with a ReLU in
/// between. widths[0] is the stem; each later width is one residual stage.
/// The paper-scale 18-layer layout is expressible via widths/blocks_per_stage.
struct BackboneConfig {
  int in_t = 15;
  int in_h = 20;
  int in_w = 20;
  int feature_dim = 64;  // D
  std::vector<int> widths = {4, 8, 16, 32};
  std::vector<int> spatial_strides = {1, 2, 2, 2};
  std::vector<int> temporal_strides = {1, 2, 2, 2};
  int blocks_per_stage = 1;

  void validate() const;
};

/// Owns named parameters; iteration order is creation order everywhere, which
/// keeps checkpoints and optimizer traversal deterministic.
struct ParamStore {
  std::vector<std::unique_ptr<ad::Parameter>> params;

  ad::Parameter* add(const std::string& name, Tensor init);
  ad::Parameter* find(const std::string& name) const;
  std::vector<ad::Parameter*> all() const;
};

/// Hidden and cell vectors of one LSTM; plain data, movable between threads.
struct RecurrentState {
  Tensor h;
  Tensor c;

  static RecurrentState zeros(int width) {
    return RecurrentState{Tensor({width}), Tensor({width})};
  }
};

struct Lstm {
  ad::Parameter* wx = nullptr;  // [4H, D]
  ad::Parameter* wh = nullptr;  // [4H, H]
  ad::Parameter* b = nullptr;   // [4H]
  int input = 0;
  int hidden = 0;

  static Lstm build(const std::string& prefix, int input, int hidden,
                    ParamStore& ps, rng::Stream& rs);
  /// One recurrence step: returns (h', c').
  std::pair<ad::Var, ad::Var> step(const ad::Var& x, const ad::Var& h,
                                   const ad::Var& c) const;
};

struct Backbone {
  struct FactoredConv {
    ad::Parameter *ws = nullptr, *bs = nullptr;  // spatial
    ad::Parameter *wt = nullptr, *bt = nullptr;  // temporal
    int sp = 1, st = 1;
    int ksp = 3, ktm = 3;  // kernel sizes (1 for projections)
  };
  struct Block {
    FactoredConv c1, c2;
    FactoredConv proj;
    bool has_proj = false;
  };

  BackboneConfig cfg;
  FactoredConv stem;
  std::vector<Block> blocks;
  ad::Parameter* fc_w = nullptr;  // [D, widths.back()]
  ad::Parameter* fc_b = nullptr;  // [D]

  static Backbone build(const std::string& prefix, const BackboneConfig& cfg,
                        ParamStore& ps, rng::Stream& rs);
  /// x: [B, T, 1, H, W] with T == cfg.in_t -> raw features [B, D].
  ad::Var forward(const ad::Var& x) const;
};

/// 1-D batch normalization head producing the normalized feature vector the
/// classifier consumes. Running statistics are updated in training mode only.
struct BnHead {
  ad::Parameter* gamma = nullptr;
  ad::Parameter* beta = nullptr;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BnHead build(const std::string& prefix, int dim, ParamStore& ps);
  ad::Var forward(const ad::Var& x, bool training);
};

/// Scale hidden and cell state by the actionness probability (soft memory
/// reset applied to the classification LSTM before its step).
std::pair<ad::Var, ad::Var> gate_memory(const ad::Var& h, const ad::Var& c,
                                        const ad::Var& y_a);

enum class ModelKind { teacher, student, okdad };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::teacher;
  int num_classes = 10;
  BackboneConfig backbone;  // in_t is T_off for the teacher, delta for students
  int class_hidden = 256;
  int act_hidden = 128;
  int t_off = 15;
  int stride = 3;  // s
  int delta = 5;
  double crop_margin = 0.1;  // preprocessing the model was trained with
  // Gating mode: soft scaling by y_a (default) or hard reset below threshold.
  bool hard_gating = false;
  double actionness_threshold = 0.75;

  void validate() const;
};

/// One network with all its parameters. Which heads exist depends on `kind`:
///   teacher: backbone + bn + classifier
///   student: backbone + classification LSTM + reconstruction + classifier
///   okdad:   student + actionness LSTM + actionness head
struct Model {
  ModelConfig cfg;
  ParamStore store;
  Backbone backbone;
  BnHead bn;                            // teacher only
  ad::Parameter* cls_w = nullptr;       // [C, D]
  ad::Parameter* cls_b = nullptr;       // [C]
  Lstm class_lstm;                      // student/okdad
  ad::Parameter* rec_w = nullptr;       // [D, class_hidden]
  ad::Parameter* rec_b = nullptr;       // [D]
  Lstm act_lstm;                        // okdad
  ad::Parameter* act_w = nullptr;       // [1, act_hidden]
  ad::Parameter* act_b = nullptr;       // [1]

  static Model build(const ModelConfig& cfg, uint64_t seed);

  bool has_class_lstm() const { return cfg.kind != ModelKind::teacher; }
  bool has_actionness() const { return cfg.kind == ModelKind::okdad; }

  ///

  /// Raw backbone features for a stack of frame blocks.
  /// x: [B, T, 1, H, W]; T must equal backbone cfg.in_t.
  ad::Var features(const ad::Var& x) const { return backbone.forward(x); }

  /// Teacher: normalized feature vector x_p. Training mode updates BN
  /// running statistics and requires batch >= 2.
  ad::Var teacher_features(const ad::Var& x, bool training);

  /// Classifier logits for normalized/reconstructed features [B, D] or [D].
  ad::Var classifier_logits(const ad::Var& feat) const;

  /// Softmax class distribution (non-differentiable path).
  Tensor classify(const Tensor& feature) const;

  /// Classification LSTM step plus reconstruction output x_c.
  struct ClassStep {
    ad::Var h, c;   // new state
    ad::Var x_c;    // reconstruction, [D]
    ad::Var logits; // frozen classifier on x_c, [C]
  };
  ClassStep class_step(const ad::Var& feat, const ad::Var& h,
                       const ad::Var& c) const;

  /// Actionness LSTM step; returns new state and y_a in (0,1).
  struct ActStep {
    ad::Var h, c;
    ad::Var y_a;  // scalar
  };
  ActStep actionness_step(const ad::Var& feat, const ad::Var& h,
                          const ad::Var& c) const;

  /// Gate scalar actually applied for a predicted probability, honoring the
  /// configured mode (soft: y_a itself; hard: 1 if y_a >= threshold else 0).
  double gate_value(double y_a) const;
};

/// Fan-in scaled uniform init for a [out, in...] weight tensor.
void init_fanin_uniform(Tensor& t, int fan_in, rng::Stream& rs);

}  // namespace okdad::nets
