#include "okdad/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace okdad::losses {

using ad::Var;

void TeacherLossConfig::validate() const {
  if (!(gamma > 0.0))
    throw std::invalid_argument("teacher loss: gamma must be > 0");
  if (!(log_clamp_eps > 0.0 && log_clamp_eps < 0.5))
    throw std::invalid_argument("teacher loss: log_clamp_eps out of range");
  if (alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("teacher loss: negative weights");
}

void StudentLossConfig::validate() const {
  if (eta < 0.0) throw std::invalid_argument("student loss: eta must be >= 0");
  if (!(log_clamp_eps > 0.0 && log_clamp_eps < 0.5))
    throw std::invalid_argument("student loss: log_clamp_eps out of range");
}

double cosine_sim(const Tensor& u, const Tensor& v) {
  if (u.numel() != v.numel())
    throw std::invalid_argument("cosine_sim: size mismatch");
  double uu = 0, vv = 0, uv = 0;
  for (int64_t i = 0; i < u.numel(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw std::invalid_argument("cosine_sim: zero-norm input");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

namespace {

// (cos + 1) / 2 as a graph node
Var half_shift(const Var& cos_v) {
  return ad::scale_const(ad::s_add(cos_v, ad::constant_scalar(1.0)), 0.5);
}

}  // namespace

Var teacher_loss(const Var& x_p, const Var& logits,
                 const std::vector<int>& labels, double r,
                 const TeacherLossConfig& cfg,
                 TeacherLossBreakdown* breakdown) {
  cfg.validate();
  if (!(r > 0.0 && r <= 1.0))
    throw std::invalid_argument("teacher_loss: r must be in (0,1]");
  const int B = x_p->value.dim(0);
  const int D = x_p->value.dim(1);
  if ((int)labels.size() != B)
    throw std::invalid_argument("teacher_loss: labels size mismatch");

  auto ce = ad::softmax_ce(logits, labels);  // validates label range

  // pairwise cosine terms over i < j
  std::vector<Var> rows(B);
  for (int i = 0; i < B; ++i) rows[i] = ad::slice(x_p, (int64_t)i * D, D);
  std::vector<Var> same_terms, diff_terms;
  for (int i = 0; i < B; ++i)
    for (int j = i + 1; j < B; ++j) {
      auto cos_ij = ad::cosine(rows[i], rows[j]);
      auto arg = half_shift(cos_ij);
      if (labels[i] == labels[j]) {
        same_terms.push_back(ad::scale_const(
            ad::s_log_clamped(arg, cfg.log_clamp_eps), -1.0));
      } else {
        auto one_minus = ad::s_sub(ad::constant_scalar(1.0), arg);
        diff_terms.push_back(ad::scale_const(
            ad::s_log_clamped(one_minus, cfg.log_clamp_eps), -1.0));
      }
    }

  std::vector<Var> parts{ce};
  std::vector<double> weights{1.0};
  if (!same_terms.empty()) {
    parts.push_back(ad::weighted_sum(
        same_terms, std::vector<double>(same_terms.size(), 1.0)));
    weights.push_back(cfg.alpha / (double)same_terms.size());
  }
  if (!diff_terms.empty()) {
    parts.push_back(ad::weighted_sum(
        diff_terms, std::vector<double>(diff_terms.size(), 1.0)));
    weights.push_back(cfg.beta / (double)diff_terms.size());
  }
  const double prefactor = std::pow(r, cfg.gamma);
  auto total = ad::scale_const(ad::weighted_sum(parts, weights), prefactor);

  if (breakdown) {
    breakdown->total = total->value[0];
    breakdown->cross_entropy = ce->value[0];
    breakdown->num_same_pairs = (int)same_terms.size();
    breakdown->num_diff_pairs = (int)diff_terms.size();
    breakdown->ratio_factor = prefactor;
    double s = 0;
    for (const auto& t : same_terms) s += t->value[0];
    breakdown->similarity =
        same_terms.empty() ? 0.0 : cfg.alpha * s / same_terms.size();
    double d = 0;
    for (const auto& t : diff_terms) d += t->value[0];
    breakdown->dissimilarity =
        diff_terms.empty() ? 0.0 : cfg.beta * d / diff_terms.size();
  }
  return total;
}

std::vector<double> sigmoid_weights(int T) {
  if (T <= 0) throw std::invalid_argument("sigmoid_weights: T must be >= 1");
  if (T == 1) return {1.0};
  std::vector<double> w(T);
  for (int t = 1; t <= T; ++t) {
    const double x = 4.0 * (t - 1) / (T - 1) - 2.0;
    w[t - 1] = (2.0 / T) / (1.0 + std::exp(-x));
  }
  return w;
}

double teacher_error(const Tensor& distribution, int label) {
  if (label < 0 || label >= distribution.numel())
    throw std::invalid_argument("teacher_error: label out of range");
  double sum = 0;
  for (double p : distribution.data) sum += p;
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("teacher_error: distribution must sum to 1");
  return 1.0 - distribution[label];
}

Var student_loss(const std::vector<Var>& step_logits, int label,
                 const std::vector<Var>& x_c, const std::vector<Tensor>& x_p,
                 const std::vector<double>& epsilon, int T_valid,
                 const StudentLossConfig& cfg) {
  cfg.validate();
  if (T_valid < 1)
    throw std::invalid_argument("student_loss: T_valid must be >= 1");
  if ((int)step_logits.size() < T_valid || (int)x_c.size() < T_valid ||
      (int)x_p.size() < T_valid || (int)epsilon.size() < T_valid)
    throw std::invalid_argument(
        "student_loss: T_valid exceeds per-step array length");
  const auto sigma = sigmoid_weights(T_valid);
  std::vector<Var> terms;
  terms.reserve(T_valid);
  for (int t = 0; t < T_valid; ++t) {
    auto term = ad::softmax_ce(step_logits[t], {label});
    const double coeff = cfg.eta * (1.0 - epsilon[t]);
    if (coeff != 0.0) {
      auto cos_t = ad::cosine(ad::constant(x_p[t]), x_c[t]);
      auto lg = ad::s_log_clamped(half_shift(cos_t), cfg.log_clamp_eps);
      term = ad::s_sub(term, ad::scale_const(lg, coeff));
    }
    terms.push_back(term);
  }
  return ad::weighted_sum(terms, sigma);
}

Var okdad_loss(const std::vector<Var>& actionness,
               const std::vector<double>& actionness_labels,
               const std::vector<ActionTerm>& actions,
               const StudentLossConfig& cfg) {
  cfg.validate();
  const int T = (int)actionness.size();
  if (T < 1) throw std::invalid_argument("okdad_loss: empty window");
  if (actionness_labels.size() != actionness.size())
    throw std::invalid_argument("okdad_loss: label/prediction size mismatch");
  std::vector<Var> parts;
  std::vector<double> weights;
  for (int t = 0; t < T; ++t) {
    parts.push_back(
        ad::bce(actionness[t], actionness_labels[t], cfg.log_clamp_eps));
    weights.push_back(1.0 / T);
  }
  for (const auto& a : actions) {
    parts.push_back(student_loss(a.step_logits, a.label, a.x_c, a.x_p,
                                 a.epsilon, (int)a.step_logits.size(), cfg));
    weights.push_back(1.0);
  }
  return ad::weighted_sum(parts, weights);
}

}  // namespace okdad::losses
