#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "okdad/losses.hpp"
#include "okdad/rng.hpp"
#include "test_util.hpp"

using namespace okdad;
using namespace okdad::losses;
using testutil::fill_random;

// ---------------------------------------------------------------------------
// brute-force oracles: explicit loops over the written-out formulas, sharing
// no code with the implementation
// ---------------------------------------------------------------------------
namespace oracle {

double ce(const std::vector<double>& logits, int label) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  return -(logits[label] - mx - std::log(z));
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double uu = 0, vv = 0, uv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

double clamped_log(double x, double eps) {
  if (x < eps) x = eps;
  if (x > 1.0) x = 1.0;
  return std::log(x);
}

double teacher(const std::vector<std::vector<double>>& x_p,
               const std::vector<std::vector<double>>& logits,
               const std::vector<int>& labels, double r,
               const TeacherLossConfig& cfg) {
  const int B = (int)x_p.size();
  double ce_sum = 0;
  for (int i = 0; i < B; ++i) ce_sum += ce(logits[i], labels[i]);
  ce_sum /= B;
  double same = 0, diff = 0;
  int n_same = 0, n_diff = 0;
  for (int i = 0; i < B; ++i)
    for (int j = i + 1; j < B; ++j) {
      const double arg = (cosine(x_p[i], x_p[j]) + 1.0) / 2.0;
      if (labels[i] == labels[j]) {
        same += -clamped_log(arg, cfg.log_clamp_eps);
        n_same++;
      } else {
        diff += -clamped_log(1.0 - arg, cfg.log_clamp_eps);
        n_diff++;
      }
    }
  double loss = ce_sum;
  if (n_same > 0) loss += cfg.alpha * same / n_same;
  if (n_diff > 0) loss += cfg.beta * diff / n_diff;
  return std::pow(r, cfg.gamma) * loss;
}

std::vector<double> sigma(int T) {
  if (T == 1) return {1.0};
  std::vector<double> w;
  for (int t = 1; t <= T; ++t)
    w.push_back(2.0 / T / (1.0 + std::exp(-(4.0 * (t - 1) / (T - 1) - 2.0))));
  return w;
}

double student(const std::vector<std::vector<double>>& logits, int label,
               const std::vector<std::vector<double>>& x_c,
               const std::vector<std::vector<double>>& x_p,
               const std::vector<double>& eps, int T_valid,
               const StudentLossConfig& cfg) {
  const auto w = sigma(T_valid);
  double loss = 0;
  for (int t = 0; t < T_valid; ++t) {
    double term = ce(logits[t], label);
    const double arg = (cosine(x_p[t], x_c[t]) + 1.0) / 2.0;
    term -= cfg.eta * (1.0 - eps[t]) * clamped_log(arg, cfg.log_clamp_eps);
    loss += w[t] * term;
  }
  return loss;
}

double bce(double p, double y, double eps) {
  double lp = std::log(std::max(p, eps));
  double lq = std::log(std::max(1.0 - p, eps));
  return -(y * lp + (1.0 - y) * lq);
}

}  // namespace oracle

namespace {

ad::Var make_matrix(const std::vector<std::vector<double>>& rows) {
  const int B = (int)rows.size(), D = (int)rows[0].size();
  Tensor t({B, D});
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < D; ++j) t[(int64_t)i * D + j] = rows[i][j];
  return ad::constant(std::move(t));
}

std::vector<std::vector<double>> random_rows(int B, int D, rng::Stream& rs,
                                             double scale = 1.0) {
  std::vector<std::vector<double>> rows(B, std::vector<double>(D));
  for (auto& r : rows)
    for (auto& v : r) v = scale * (2 * rs.next_double() - 1);
  return rows;
}

}  // namespace

TEST_CASE("cosine_sim basic values and zero-norm error") {
  Tensor u({3}), v({3});
  u.data = {1, 2, 3};
  v.data = {1, 2, 3};
  CHECK(cosine_sim(u, v) == doctest::Approx(1.0));
  v.data = {-1, -2, -3};
  CHECK(cosine_sim(u, v) == doctest::Approx(-1.0));
  u.data = {1, 0, 0};
  v.data = {0, 1, 0};
  CHECK(cosine_sim(u, v) == doctest::Approx(0.0));
  v.data = {0, 0, 0};
  CHECK_THROWS_AS((void)cosine_sim(u, v), std::invalid_argument);
}

TEST_CASE("teacher_loss switch-offs and pair cases") {
  TeacherLossConfig cfg;
  rng::Stream rs(3);

  SUBCASE("alpha=beta=0, r=1 reduces to mean cross-entropy") {
    cfg.alpha = 0;
    cfg.beta = 0;
    auto x_p = random_rows(4, 6, rs);
    auto logits = random_rows(4, 3, rs);
    std::vector<int> labels{0, 1, 2, 1};
    auto loss = teacher_loss(make_matrix(x_p), make_matrix(logits), labels,
                             1.0, cfg);
    double want = 0;
    for (int i = 0; i < 4; ++i) want += oracle::ce(logits[i], labels[i]);
    want /= 4;
    CHECK(loss->value[0] == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("identical same-class features: similarity term is zero") {
    auto x_p = random_rows(2, 6, rs);
    x_p[1] = x_p[0];
    auto logits = random_rows(2, 3, rs);
    std::vector<int> labels{1, 1};
    TeacherLossBreakdown bd;
    (void)teacher_loss(make_matrix(x_p), make_matrix(logits), labels, 1.0,
                       cfg, &bd);
    CHECK(bd.similarity == doctest::Approx(0.0));
    CHECK(bd.num_same_pairs == 1);
    CHECK(bd.num_diff_pairs == 0);
  }

  SUBCASE("orthogonal different-class features: -ln(0.5) * beta") {
    std::vector<std::vector<double>> x_p{{1, 0, 0, 0}, {0, 1, 0, 0}};
    auto logits = random_rows(2, 3, rs);
    std::vector<int> labels{0, 2};
    TeacherLossBreakdown bd;
    (void)teacher_loss(make_matrix(x_p), make_matrix(logits), labels, 1.0,
                       cfg, &bd);
    CHECK(bd.dissimilarity ==
          doctest::Approx(cfg.beta * std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("label out of range is an input error") {
    auto x_p = random_rows(2, 4, rs);
    auto logits = random_rows(2, 3, rs);
    CHECK_THROWS_AS((void)teacher_loss(make_matrix(x_p), make_matrix(logits),
                                       std::vector<int>{0, 3}, 1.0, cfg),
                    std::invalid_argument);
  }
}

TEST_CASE("teacher_loss matches the pairwise brute-force oracle") {
  rng::Stream rs(17);
  TeacherLossConfig cfg;
  for (int rep = 0; rep < 40; ++rep) {
    const int B = 2 + (int)rs.next_below(6);
    const int C = 2 + (int)rs.next_below(4);
    const int D = 4 + (int)rs.next_below(6);
    cfg.alpha = rs.uniform(0, 2);
    cfg.beta = rs.uniform(0, 2);
    cfg.gamma = rs.uniform(0.2, 2.0);
    auto x_p = random_rows(B, D, rs);
    auto logits = random_rows(B, C, rs);
    std::vector<int> labels(B);
    for (auto& l : labels) l = (int)rs.next_below(C);
    const double r = rs.uniform(0.05, 1.0);
    auto loss =
        teacher_loss(make_matrix(x_p), make_matrix(logits), labels, r, cfg);
    const double want = oracle::teacher(x_p, logits, labels, r, cfg);
    CHECK(std::fabs(loss->value[0] - want) < 1e-10);
  }
}

TEST_CASE("teacher_loss invariances") {
  rng::Stream rs(23);
  TeacherLossConfig cfg;
  auto x_p = random_rows(6, 8, rs);
  auto logits = random_rows(6, 3, rs);
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  auto base =
      teacher_loss(make_matrix(x_p), make_matrix(logits), labels, 0.7, cfg);

  SUBCASE("batch permutation invariance") {
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    std::vector<std::vector<double>> x2, l2;
    std::vector<int> lab2;
    for (int i : perm) {
      x2.push_back(x_p[i]);
      l2.push_back(logits[i]);
      lab2.push_back(labels[i]);
    }
    auto permuted =
        teacher_loss(make_matrix(x2), make_matrix(l2), lab2, 0.7, cfg);
    CHECK(permuted->value[0] == doctest::Approx(base->value[0]).epsilon(1e-12));
  }

  SUBCASE("positive rescaling of any x_p row leaves the loss unchanged") {
    auto x2 = x_p;
    for (auto& row : x2)
      for (auto& v : row) v *= 3.7;
    auto scaled =
        teacher_loss(make_matrix(x2), make_matrix(logits), labels, 0.7, cfg);
    CHECK(scaled->value[0] == doctest::Approx(base->value[0]).epsilon(1e-12));
  }

  SUBCASE("non-negative with clamping active") {
    for (int rep = 0; rep < 20; ++rep) {
      auto xr = random_rows(5, 6, rs);
      auto lr = random_rows(5, 3, rs);
      std::vector<int> lab(5);
      for (auto& l : lab) l = (int)rs.next_below(3);
      auto v = teacher_loss(make_matrix(xr), make_matrix(lr), lab,
                            rs.uniform(0.1, 1.0), cfg);
      CHECK(v->value[0] >= 0.0);
    }
  }
}

TEST_CASE("teacher_loss gradients match finite differences") {
  rng::Stream rs(31);
  const int B = 6, C = 3, D = 8;
  ad::Parameter x_p("x_p", Tensor({B, D}));
  ad::Parameter logits("logits", Tensor({B, C}));
  fill_random(x_p.value, rs);
  fill_random(logits.value, rs);
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  TeacherLossConfig cfg;
  auto build = [&] {
    return teacher_loss(ad::leaf(x_p), ad::leaf(logits), labels, 0.6, cfg);
  };
  CHECK(testutil::max_grad_rel_err({&x_p, &logits}, build) < 1e-4);
}

TEST_CASE("sigmoid_weights values, sum, monotonicity") {
  CHECK(sigmoid_weights(1) == std::vector<double>{1.0});
  auto w2 = sigmoid_weights(2);
  CHECK(w2[0] == doctest::Approx(0.1192).epsilon(1e-3));
  CHECK(w2[1] == doctest::Approx(0.8808).epsilon(1e-3));
  for (int T = 2; T <= 200; ++T) {
    auto w = sigmoid_weights(T);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
    for (int t = 1; t < T; ++t) CHECK(w[t] > w[t - 1]);
  }
  CHECK_THROWS_AS((void)sigmoid_weights(0), std::invalid_argument);
}

TEST_CASE("teacher_error") {
  Tensor one_hot({4});
  one_hot.data = {0, 0, 1, 0};
  CHECK(teacher_error(one_hot, 2) == doctest::Approx(0.0));
  CHECK(teacher_error(one_hot, 1) == doctest::Approx(1.0));
  Tensor uniform({4}, 0.25);
  CHECK(teacher_error(uniform, 0) == doctest::Approx(0.75));
  CHECK_THROWS_AS((void)teacher_error(uniform, 4), std::invalid_argument);
}

namespace {
struct StudentCase {
  std::vector<std::vector<double>> logits, x_c, x_p;
  std::vector<double> eps;
  int label = 0;
};

StudentCase random_student_case(rng::Stream& rs, int T, int C, int D) {
  StudentCase sc;
  sc.logits = random_rows(T, C, rs);
  sc.x_c = random_rows(T, D, rs);
  sc.x_p = random_rows(T, D, rs);
  sc.eps.resize(T);
  for (auto& e : sc.eps) e = rs.next_double();
  sc.label = (int)rs.next_below(C);
  return sc;
}

ad::Var run_student(const StudentCase& sc, int T_valid,
                    const StudentLossConfig& cfg) {
  std::vector<ad::Var> logits, x_c;
  std::vector<Tensor> x_p;
  for (const auto& row : sc.logits) {
    Tensor t({(int)row.size()});
    t.data = row;
    logits.push_back(ad::constant(std::move(t)));
  }
  for (const auto& row : sc.x_c) {
    Tensor t({(int)row.size()});
    t.data = row;
    x_c.push_back(ad::constant(std::move(t)));
  }
  for (const auto& row : sc.x_p) {
    Tensor t({(int)row.size()});
    t.data = row;
    x_p.push_back(std::move(t));
  }
  return student_loss(logits, sc.label, x_c, x_p, sc.eps, T_valid, cfg);
}
}  // namespace

TEST_CASE("student_loss switch-offs") {
  rng::Stream rs(41);
  StudentLossConfig cfg;
  auto sc = random_student_case(rs, 4, 3, 6);

  SUBCASE("eta = 0 gives sigmoid-weighted cross-entropy only") {
    cfg.eta = 0;
    auto v = run_student(sc, 4, cfg);
    auto w = oracle::sigma(4);
    double want = 0;
    for (int t = 0; t < 4; ++t)
      want += w[t] * oracle::ce(sc.logits[t], sc.label);
    CHECK(v->value[0] == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("x_c equal to x_p removes the distillation term") {
    cfg.eta = 1;
    auto sc2 = sc;
    sc2.x_c = sc2.x_p;
    auto with = run_student(sc2, 4, cfg);
    StudentLossConfig cfg0 = cfg;
    cfg0.eta = 0;
    auto without = run_student(sc2, 4, cfg0);
    CHECK(with->value[0] == doctest::Approx(without->value[0]).epsilon(1e-12));
  }

  SUBCASE("teacher fully wrong contributes nothing") {
    cfg.eta = 1;
    auto sc2 = sc;
    for (auto& e : sc2.eps) e = 1.0;
    auto with = run_student(sc2, 4, cfg);
    StudentLossConfig cfg0 = cfg;
    cfg0.eta = 0;
    auto without = run_student(sc2, 4, cfg0);
    CHECK(with->value[0] == doctest::Approx(without->value[0]).epsilon(1e-12));
  }

  SUBCASE("T_valid beyond array length is an input error") {
    CHECK_THROWS_AS((void)run_student(sc, 5, cfg), std::invalid_argument);
  }
}

TEST_CASE("student_loss matches the explicit-loop oracle") {
  rng::Stream rs(43);
  StudentLossConfig cfg;
  for (int rep = 0; rep < 40; ++rep) {
    const int T = 1 + (int)rs.next_below(6);
    const int C = 2 + (int)rs.next_below(3);
    const int D = 4 + (int)rs.next_below(6);
    cfg.eta = rs.uniform(0, 2);
    auto sc = random_student_case(rs, T, C, D);
    const int T_valid = 1 + (int)rs.next_below(T);
    auto v = run_student(sc, T_valid, cfg);
    const double want = oracle::student(sc.logits, sc.label, sc.x_c, sc.x_p,
                                        sc.eps, T_valid, cfg);
    CHECK(std::fabs(v->value[0] - want) < 1e-10);
  }
}

TEST_CASE("student_loss gradients match finite differences") {
  rng::Stream rs(47);
  const int T = 5, C = 4, D = 8;
  StudentLossConfig cfg;
  std::vector<ad::Parameter> logit_params, xc_params;
  for (int t = 0; t < T; ++t) {
    logit_params.emplace_back("l" + std::to_string(t), Tensor({C}));
    xc_params.emplace_back("x" + std::to_string(t), Tensor({D}));
  }
  std::vector<Tensor> x_p(T, Tensor({D}));
  std::vector<double> eps(T);
  for (int t = 0; t < T; ++t) {
    fill_random(logit_params[t].value, rs);
    fill_random(xc_params[t].value, rs);
    fill_random(x_p[t], rs);
    eps[t] = rs.next_double();
  }
  auto build = [&] {
    std::vector<ad::Var> logits, x_c;
    for (int t = 0; t < T; ++t) {
      logits.push_back(ad::leaf(logit_params[t]));
      x_c.push_back(ad::leaf(xc_params[t]));
    }
    return student_loss(logits, 2, x_c, x_p, eps, T, cfg);
  };
  std::vector<ad::Parameter*> ps;
  for (auto& p : logit_params) ps.push_back(&p);
  for (auto& p : xc_params) ps.push_back(&p);
  CHECK(testutil::max_grad_rel_err(ps, build) < 1e-4);
}

TEST_CASE("okdad_loss cases and oracle") {
  rng::Stream rs(53);
  StudentLossConfig cfg;

  SUBCASE("no actions, perfect actionness predictions: loss 0") {
    std::vector<ad::Var> preds{ad::constant_scalar(0.0),
                               ad::constant_scalar(0.0)};
    auto v = okdad_loss(preds, {0.0, 0.0}, {}, cfg);
    CHECK(v->value[0] == doctest::Approx(0.0));
  }

  SUBCASE("constant 0.5 predictions, labels 1, T=4: BCE term is ln 2") {
    std::vector<ad::Var> preds(4, ad::constant_scalar(0.5));
    auto v = okdad_loss(preds, {1, 1, 1, 1}, {}, cfg);
    CHECK(v->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("whole-window action equals BCE plus one student term") {
    const int T = 4, C = 3, D = 6;
    auto sc = random_student_case(rs, T, C, D);
    ActionTerm at;
    at.label = sc.label;
    std::vector<double> ya_labels(T, 1.0);
    std::vector<ad::Var> preds;
    std::vector<double> pvals;
    for (int t = 0; t < T; ++t) {
      pvals.push_back(0.1 + 0.8 * rs.next_double());
      preds.push_back(ad::constant_scalar(pvals.back()));
    }
    for (int t = 0; t < T; ++t) {
      Tensor l({C}), xc({D}), xp({D});
      l.data = sc.logits[t];
      xc.data = sc.x_c[t];
      xp.data = sc.x_p[t];
      at.step_logits.push_back(ad::constant(std::move(l)));
      at.x_c.push_back(ad::constant(std::move(xc)));
      at.x_p.push_back(std::move(xp));
      at.epsilon.push_back(sc.eps[t]);
    }
    auto v = okdad_loss(preds, ya_labels, {at}, cfg);
    double want = 0;
    for (int t = 0; t < T; ++t)
      want += oracle::bce(pvals[t], 1.0, cfg.log_clamp_eps) / T;
    want += oracle::student(sc.logits, sc.label, sc.x_c, sc.x_p, sc.eps, T,
                            cfg);
    CHECK(std::fabs(v->value[0] - want) < 1e-10);
  }
}
