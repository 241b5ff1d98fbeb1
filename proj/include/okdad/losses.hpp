#pragma once

#include <vector>

#include "okdad/autodiff.hpp"
#include "okdad/tensor.hpp"

namespace okdad::losses {

struct TeacherLossConfig {
  double alpha = 1.0;   // similarity weight
  double beta = 0.5;    // dissimilarity weight
  double gamma = 2.0 / 3.0;  // observation-ratio exponent
  double log_clamp_eps = 1e-7;

  void validate() const;
};

struct StudentLossConfig {
  double eta = 1.0;  // distillation weight
  double log_clamp_eps = 1e-7;

  void validate() const;
};

/// u.v / (|u||v|); throws on zero-norm input (callers must guard).
double cosine_sim(const Tensor& u, const Tensor& v);

struct TeacherLossBreakdown {
  double total = 0;           // after the r^gamma prefactor
  double cross_entropy = 0;   // components before the prefactor
  double similarity = 0;
  double dissimilarity = 0;
  double ratio_factor = 1;    // r^gamma
  int num_same_pairs = 0;     // N_=
  int num_diff_pairs = 0;     // N_!=
};

/// r^gamma * [ mean cross-entropy
///           + (alpha/N_=)  sum_{i<j, same class}  -ln((cos+1)/2)
///           + (beta/N_!=)  sum_{i<j, diff class}  -ln(1-(cos+1)/2) ]
/// Terms with an empty pair set contribute 0. ln arguments are clamped to
/// [log_clamp_eps, 1]. Differentiable w.r.t. x_p and logits.
ad::Var teacher_loss(const ad::Var& x_p, const ad::Var& logits,
                     const std::vector<int>& labels, double r,
                     const TeacherLossConfig& cfg,
                     TeacherLossBreakdown* breakdown = nullptr);

/// Per-step loss weights drawn evenly from a sigmoid over [-2,2]:
/// sigma_t = (2/T) * sigmoid(4(t-1)/(T-1) - 2); exactly {1.0} for T = 1.
/// Sums to 1 and is strictly increasing for T >= 2.
std::vector<double> sigmoid_weights(int T);

/// epsilon = 1 - P(correct class) under the teacher's distribution.
double teacher_error(const Tensor& distribution, int label);

/// sum_{t<T_valid} sigma_t * [ H(label, logits_t)
///                            - eta (1-eps_t) ln((cos(x_p_t, x_c_t)+1)/2) ]
/// with sigma = sigmoid_weights(T_valid). x_p and eps are constants (no
/// gradient to the teacher); steps at or beyond T_valid contribute nothing.
ad::Var student_loss(const std::vector<ad::Var>& step_logits, int label,
                     const std::vector<ad::Var>& x_c,
                     const std::vector<Tensor>& x_p,
                     const std::vector<double>& epsilon, int T_valid,
                     const StudentLossConfig& cfg);

/// Inputs of one action inside an OKDAD training window: the student's
/// outputs at the blocks overlapping the action, plus the cached teacher
/// targets for those steps.
struct ActionTerm {
  int label = 0;
  std::vector<ad::Var> step_logits;
  std::vector<ad::Var> x_c;
  std::vector<Tensor> x_p;
  std::vector<double> epsilon;
};

/// (1/T) sum_t BCE(actionness_t, label_t) + sum_a student_loss(action a).
/// Callers pass only the window's valid (non-padded) blocks.
ad::Var okdad_loss(const std::vector<ad::Var>& actionness,
                   const std::vector<double>& actionness_labels,
                   const std::vector<ActionTerm>& actions,
                   const StudentLossConfig& cfg);

}  // namespace okdad::losses
