#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "okdad/autodiff.hpp"
#include "okdad/rng.hpp"
#include "okdad/tensor.hpp"

namespace testutil {

inline void fill_random(okdad::Tensor& t, okdad::rng::Stream& rs,
                        double scale = 1.0) {
  for (auto& v : t.data) v = scale * (2.0 * rs.next_double() - 1.0);
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

/// Central finite-difference check of d(build())/d(param) for every listed
/// parameter. `build` must rebuild the graph from the parameters' current
/// values on each call.
inline double max_grad_rel_err(std::vector<okdad::ad::Parameter*> params,
                               const std::function<okdad::ad::Var()>& build,
                               double step = 1e-4) {
  using okdad::ad::backward;
  for (auto* p : params) p->grad.fill(0.0);
  backward(build());
  double worst = 0.0;
  for (auto* p : params) {
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + step;
      const double fp = build()->value[0];
      p->value[i] = keep - step;
      const double fm = build()->value[0];
      p->value[i] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      worst = std::max(worst, rel_err(p->grad[i], fd));
    }
  }
  return worst;
}

}  // namespace testutil
