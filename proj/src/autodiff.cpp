#include "okdad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "okdad/kernels.hpp"

namespace okdad::ad {

namespace {

thread_local int64_t g_next_id = 1;

Var make(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id++;
  return n;
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> fn) {
  auto n = make(std::move(value));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

void ensure_grad(Node& n) {
  if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
}

// Accumulate helper; skips parents that do not need gradients.
bool wants(const Var& p) { return p->requires_grad; }

void acc(const Var& p, const Tensor& g) {
  if (!wants(p)) return;
  ensure_grad(*p);
  kern::axpy(1.0, g.ptr(), p->grad.ptr(), g.numel());
}

}  // namespace

Var constant(Tensor v) { return make(std::move(v)); }

Var constant_scalar(double v) { return make(Tensor::scalar(v)); }

Var leaf(Parameter& p) {
  auto n = make(p.value);
  n->requires_grad = p.trainable;
  n->param = p.trainable ? &p : nullptr;
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  // Ancestors of the root, newest first. Creation ids are a topological
  // order because parents always exist before their children.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  ensure_grad(*root);
  root->grad.fill(0.0);
  root->grad[0] = 1.0;
  for (Node* n : order) {
    ensure_grad(*n);
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (Node* n : order)
    if (n->param)
      kern::axpy(1.0, n->grad.ptr(), n->param->grad.ptr(), n->grad.numel());
}

// ---------------------------------------------------------------------------

Var conv_spatial(const Var& x, const Var& w, const Var& b, int stride,
                 int pad) {
  const auto& xs = x->value.shape;
  if (xs.size() != 5) throw std::invalid_argument("conv_spatial: need 5-d x");
  const int B = xs[0], T = xs[1], Ci = xs[2], H = xs[3], W = xs[4];
  const int Co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != Ci)
    throw std::invalid_argument("conv_spatial: channel mismatch");
  const int Ho = kern::conv_out_dim(H, kh, stride, pad);
  const int Wo = kern::conv_out_dim(W, kw, stride, pad);
  Tensor y({B, T, Co, Ho, Wo});
  kern::conv2d_fwd(x->value.ptr(), w->value.ptr(),
                   b ? b->value.ptr() : nullptr, y.ptr(), B * T, Ci, H, W, Co,
                   kh, kw, stride, pad);
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_op(std::move(y), std::move(parents),
                 [=](Node& self) {
                   const Var& px = self.parents[0];
                   const Var& pw = self.parents[1];
                   if (wants(px)) {
                     ensure_grad(*px);
                     kern::conv2d_bwd_input(self.grad.ptr(), pw->value.ptr(),
                                            px->grad.ptr(), B * T, Ci, H, W,
                                            Co, kh, kw, stride, pad);
                   }
                   double* db = nullptr;
                   if (self.parents.size() > 2 && wants(self.parents[2])) {
                     ensure_grad(*self.parents[2]);
                     db = self.parents[2]->grad.ptr();
                   }
                   if (wants(pw) || db) {
                     ensure_grad(*pw);
                     kern::conv2d_bwd_params(self.grad.ptr(), px->value.ptr(),
                                             pw->grad.ptr(), db, B * T, Ci, H,
                                             W, Co, kh, kw, stride, pad);
                   }
                 });
}

Var conv_temporal(const Var& x, const Var& w, const Var& b, int stride,
                  int pad) {
  const auto& xs = x->value.shape;
  if (xs.size() != 5) throw std::invalid_argument("conv_temporal: need 5-d x");
  const int B = xs[0], T = xs[1], Ci = xs[2], H = xs[3], W = xs[4];
  const int Co = w->value.dim(0), kt = w->value.dim(2);
  if (w->value.dim(1) != Ci)
    throw std::invalid_argument("conv_temporal: channel mismatch");
  const int S = H * W;
  const int To = kern::conv_out_dim(T, kt, stride, pad);
  Tensor y({B, To, Co, H, W});
  kern::conv1d_fwd(x->value.ptr(), w->value.ptr(),
                   b ? b->value.ptr() : nullptr, y.ptr(), B, T, Ci, S, Co, kt,
                   stride, pad);
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_op(std::move(y), std::move(parents),
                 [=](Node& self) {
                   const Var& px = self.parents[0];
                   const Var& pw = self.parents[1];
                   if (wants(px)) {
                     ensure_grad(*px);
                     kern::conv1d_bwd_input(self.grad.ptr(), pw->value.ptr(),
                                            px->grad.ptr(), B, T, Ci, S, Co,
                                            kt, stride, pad);
                   }
                   double* db = nullptr;
                   if (self.parents.size() > 2 && wants(self.parents[2])) {
                     ensure_grad(*self.parents[2]);
                     db = self.parents[2]->grad.ptr();
                   }
                   if (wants(pw) || db) {
                     ensure_grad(*pw);
                     kern::conv1d_bwd_params(self.grad.ptr(), px->value.ptr(),
                                             pw->grad.ptr(), db, B, T, Ci, S,
                                             Co, kt, stride, pad);
                   }
                 });
}

Var relu(const Var& x) {
  Tensor y(x->value.shape);
  kern::relu_fwd(x->value.ptr(), y.ptr(), y.numel());
  return make_op(std::move(y), {x}, [](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    kern::relu_bwd(px->value.ptr(), self.grad.ptr(), px->grad.ptr(),
                   self.grad.numel());
  });
}

Var add(const Var& x, const Var& y) {
  if (!x->value.same_shape(y->value))
    throw std::invalid_argument("add: shape mismatch");
  Tensor v(x->value.shape);
  kern::add_fwd(x->value.ptr(), y->value.ptr(), v.ptr(), v.numel());
  return make_op(std::move(v), {x, y}, [](Node& self) {
    acc(self.parents[0], self.grad);
    acc(self.parents[1], self.grad);
  });
}

Var mul(const Var& x, const Var& y) {
  if (!x->value.same_shape(y->value))
    throw std::invalid_argument("mul: shape mismatch");
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = x->value[i] * y->value[i];
  return make_op(std::move(v), {x, y}, [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (wants(a)) {
      ensure_grad(*a);
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        a->grad[i] += self.grad[i] * b->value[i];
    }
    if (wants(b)) {
      ensure_grad(*b);
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        b->grad[i] += self.grad[i] * a->value[i];
    }
  });
}

Var global_pool(const Var& x) {
  const auto& xs = x->value.shape;
  if (xs.size() != 5) throw std::invalid_argument("global_pool: need 5-d x");
  const int B = xs[0], T = xs[1], C = xs[2], S = xs[3] * xs[4];
  Tensor y({B, C});
  kern::gpool_fwd(x->value.ptr(), y.ptr(), B, T, C, S);
  return make_op(std::move(y), {x}, [=](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    kern::gpool_bwd(self.grad.ptr(), px->grad.ptr(), B, T, C, S);
  });
}

Var linear(const Var& x, const Var& W, const Var& b) {
  const bool vec = x->value.ndim() == 1;
  const int B = vec ? 1 : x->value.dim(0);
  const int n = vec ? x->value.dim(0) : x->value.dim(1);
  const int m = W->value.dim(0);
  if (W->value.dim(1) != n)
    throw std::invalid_argument("linear: weight/input mismatch");
  Tensor y(vec ? std::vector<int>{m} : std::vector<int>{B, m});
  // y = x * W^T
  kern::gemm(false, true, B, m, n, x->value.ptr(), W->value.ptr(), y.ptr(),
             false);
  if (b) {
    if (b->value.numel() != m)
      throw std::invalid_argument("linear: bias size mismatch");
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < m; ++j) y[(int64_t)i * m + j] += b->value[j];
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, W, b}
                               : std::vector<Var>{x, W};
  return make_op(std::move(y), std::move(parents), [=](Node& self) {
    const Var& px = self.parents[0];
    const Var& pw = self.parents[1];
    if (wants(px)) {
      ensure_grad(*px);
      // dx += dy * W
      kern::gemm(false, false, B, n, m, self.grad.ptr(), pw->value.ptr(),
                 px->grad.ptr(), true);
    }
    if (wants(pw)) {
      ensure_grad(*pw);
      // dW += dy^T * x
      kern::gemm(true, false, m, n, B, self.grad.ptr(), px->value.ptr(),
                 pw->grad.ptr(), true);
    }
    if (self.parents.size() > 2 && wants(self.parents[2])) {
      const Var& pb = self.parents[2];
      ensure_grad(*pb);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < m; ++j) pb->grad[j] += self.grad[(int64_t)i * m + j];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor y(x->value.shape);
  for (int64_t i = 0; i < y.numel(); ++i)
    y[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  return make_op(std::move(y), {x}, [](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      double s = self.value[i];
      px->grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh_v(const Var& x) {
  Tensor y(x->value.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(x->value[i]);
  return make_op(std::move(y), {x}, [](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      double t = self.value[i];
      px->grad[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Var slice(const Var& x, int64_t offset, int64_t len) {
  if (offset < 0 || offset + len > x->value.numel())
    throw std::invalid_argument("slice: out of range");
  Tensor y({(int)len});
  for (int64_t i = 0; i < len; ++i) y[i] = x->value[offset + i];
  return make_op(std::move(y), {x}, [offset, len](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    for (int64_t i = 0; i < len; ++i) px->grad[offset + i] += self.grad[i];
  });
}

Var scale(const Var& x, const Var& s) {
  if (s->value.numel() != 1) throw std::invalid_argument("scale: s not scalar");
  Tensor y(x->value.shape);
  const double sv = s->value[0];
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = sv * x->value[i];
  return make_op(std::move(y), {x, s}, [](Node& self) {
    const Var& px = self.parents[0];
    const Var& ps = self.parents[1];
    const double sv = ps->value[0];
    if (wants(px)) {
      ensure_grad(*px);
      kern::axpy(sv, self.grad.ptr(), px->grad.ptr(), self.grad.numel());
    }
    if (wants(ps)) {
      ensure_grad(*ps);
      double acc_s = 0.0;
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        acc_s += self.grad[i] * px->value[i];
      ps->grad[0] += acc_s;
    }
  });
}

Var scale_const(const Var& x, double c) {
  Tensor y(x->value.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = c * x->value[i];
  return make_op(std::move(y), {x}, [c](Node& self) {
    const Var& px = self.parents[0];
    if (!wants(px)) return;
    ensure_grad(*px);
    kern::axpy(c, self.grad.ptr(), px->grad.ptr(), self.grad.numel());
  });
}

// ---------------------------------------------------------------------------

namespace {
void check_scalar(const Var& a, const char* what) {
  if (a->value.numel() != 1)
    throw std::invalid_argument(std::string(what) + ": scalar expected");
}
}  // namespace

Var s_add(const Var& a, const Var& b) { return add(a, b); }

Var s_sub(const Var& a, const Var& b) {
  check_scalar(a, "s_sub");
  check_scalar(b, "s_sub");
  Tensor v = Tensor::scalar(a->value[0] - b->value[0]);
  return make_op(std::move(v), {a, b}, [](Node& self) {
    if (wants(self.parents[0])) {
      ensure_grad(*self.parents[0]);
      self.parents[0]->grad[0] += self.grad[0];
    }
    if (wants(self.parents[1])) {
      ensure_grad(*self.parents[1]);
      self.parents[1]->grad[0] -= self.grad[0];
    }
  });
}

Var s_mul(const Var& a, const Var& b) { return mul(a, b); }

Var s_div(const Var& a, const Var& b) {
  check_scalar(a, "s_div");
  check_scalar(b, "s_div");
  const double bv = b->value[0];
  Tensor v = Tensor::scalar(a->value[0] / bv);
  return make_op(std::move(v), {a, b}, [](Node& self) {
    const double av = self.parents[0]->value[0];
    const double bv2 = self.parents[1]->value[0];
    if (wants(self.parents[0])) {
      ensure_grad(*self.parents[0]);
      self.parents[0]->grad[0] += self.grad[0] / bv2;
    }
    if (wants(self.parents[1])) {
      ensure_grad(*self.parents[1]);
      self.parents[1]->grad[0] -= self.grad[0] * av / (bv2 * bv2);
    }
  });
}

Var s_sqrt(const Var& a) {
  check_scalar(a, "s_sqrt");
  Tensor v = Tensor::scalar(std::sqrt(a->value[0]));
  return make_op(std::move(v), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    ensure_grad(*self.parents[0]);
    self.parents[0]->grad[0] += self.grad[0] / (2.0 * self.value[0]);
  });
}

Var s_log_clamped(const Var& a, double lo) {
  check_scalar(a, "s_log_clamped");
  const double av = a->value[0];
  const double clamped = std::min(std::max(av, lo), 1.0);
  Tensor v = Tensor::scalar(std::log(clamped));
  return make_op(std::move(v), {a}, [lo](Node& self) {
    if (!wants(self.parents[0])) return;
    const double x = self.parents[0]->value[0];
    if (x < lo || x > 1.0) return;  // flat in the clamped regions
    ensure_grad(*self.parents[0]);
    self.parents[0]->grad[0] += self.grad[0] / x;
  });
}

Var dot(const Var& u, const Var& v) {
  if (u->value.numel() != v->value.numel())
    throw std::invalid_argument("dot: size mismatch");
  double acc_d = 0.0;
  for (int64_t i = 0; i < u->value.numel(); ++i)
    acc_d += u->value[i] * v->value[i];
  return make_op(Tensor::scalar(acc_d), {u, v}, [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    const double g = self.grad[0];
    if (wants(a)) {
      ensure_grad(*a);
      kern::axpy(g, b->value.ptr(), a->grad.ptr(), a->value.numel());
    }
    if (wants(b)) {
      ensure_grad(*b);
      kern::axpy(g, a->value.ptr(), b->grad.ptr(), b->value.numel());
    }
  });
}

Var weighted_sum(const std::vector<Var>& items, const std::vector<double>& w) {
  if (items.size() != w.size())
    throw std::invalid_argument("weighted_sum: size mismatch");
  double acc_s = 0.0;
  for (size_t i = 0; i < items.size(); ++i) {
    check_scalar(items[i], "weighted_sum");
    acc_s += w[i] * items[i]->value[0];
  }
  return make_op(Tensor::scalar(acc_s), items, [w](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants(self.parents[i])) continue;
      ensure_grad(*self.parents[i]);
      self.parents[i]->grad[0] += self.grad[0] * w[i];
    }
  });
}

Var mean_of(const std::vector<Var>& items) {
  std::vector<double> w(items.size(), 1.0 / (double)items.size());
  return weighted_sum(items, w);
}

Var cosine(const Var& u, const Var& v) {
  double nu = 0.0, nv = 0.0;
  for (int64_t i = 0; i < u->value.numel(); ++i) nu += u->value[i] * u->value[i];
  for (int64_t i = 0; i < v->value.numel(); ++i) nv += v->value[i] * v->value[i];
  if (nu == 0.0 || nv == 0.0)
    throw std::invalid_argument("cosine: zero-norm input");
  return s_div(dot(u, v), s_mul(s_sqrt(dot(u, u)), s_sqrt(dot(v, v))));
}

Var softmax_ce(const Var& logits, const std::vector<int>& labels) {
  const bool vec = logits->value.ndim() == 1;
  const int B = vec ? 1 : logits->value.dim(0);
  const int C = vec ? logits->value.dim(0) : logits->value.dim(1);
  if ((int)labels.size() != B)
    throw std::invalid_argument("softmax_ce: labels size mismatch");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= C)
      throw std::invalid_argument("softmax_ce: label out of range");
  Tensor probs = softmax_value(logits->value);
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    double p = probs[(int64_t)i * C + labels[i]];
    loss -= std::log(std::max(p, 1e-300));
  }
  loss /= B;
  return make_op(Tensor::scalar(loss), {logits},
                 [probs, labels, B, C](Node& self) {
                   const Var& pl = self.parents[0];
                   if (!wants(pl)) return;
                   ensure_grad(*pl);
                   const double g = self.grad[0] / B;
                   for (int i = 0; i < B; ++i)
                     for (int c = 0; c < C; ++c) {
                       double d = probs[(int64_t)i * C + c] -
                                  (c == labels[i] ? 1.0 : 0.0);
                       pl->grad[(int64_t)i * C + c] += g * d;
                     }
                 });
}

Var bce(const Var& p, double target, double eps) {
  check_scalar(p, "bce");
  const double pv = p->value[0];
  const double lp = std::log(std::max(pv, eps));
  const double lq = std::log(std::max(1.0 - pv, eps));
  const double loss = -(target * lp + (1.0 - target) * lq);
  return make_op(Tensor::scalar(loss), {p}, [target, eps](Node& self) {
    if (!wants(self.parents[0])) return;
    ensure_grad(*self.parents[0]);
    const double pv2 = self.parents[0]->value[0];
    double d = 0.0;
    if (pv2 >= eps) d -= target / pv2;
    if (1.0 - pv2 >= eps) d += (1.0 - target) / (1.0 - pv2);
    self.parents[0]->grad[0] += self.grad[0] * d;
  });
}

Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta,
                    Tensor* running_mean, Tensor* running_var,
                    double momentum, double eps) {
  const int B = x->value.dim(0), D = x->value.dim(1);
  if (B < 2)
    throw std::invalid_argument(
        "batchnorm_train: batch size must be at least 2");
  Tensor mean({D}), var({D});
  for (int j = 0; j < D; ++j) {
    double m = 0.0;
    for (int i = 0; i < B; ++i) m += x->value[(int64_t)i * D + j];
    m /= B;
    double v = 0.0;
    for (int i = 0; i < B; ++i) {
      double d = x->value[(int64_t)i * D + j] - m;
      v += d * d;
    }
    mean[j] = m;
    var[j] = v / B;
  }
  if (running_mean && running_var) {
    for (int j = 0; j < D; ++j) {
      (*running_mean)[j] = (1.0 - momentum) * (*running_mean)[j] +
                           momentum * mean[j];
      (*running_var)[j] = (1.0 - momentum) * (*running_var)[j] +
                          momentum * var[j];
    }
  }
  Tensor xhat({B, D}), y({B, D}), inv_std({D});
  for (int j = 0; j < D; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < D; ++j) {
      double xh = (x->value[(int64_t)i * D + j] - mean[j]) * inv_std[j];
      xhat[(int64_t)i * D + j] = xh;
      y[(int64_t)i * D + j] = gamma->value[j] * xh + beta->value[j];
    }
  return make_op(
      std::move(y), {x, gamma, beta}, [xhat, inv_std, B, D](Node& self) {
        const Var& px = self.parents[0];
        const Var& pg = self.parents[1];
        const Var& pb = self.parents[2];
        if (wants(pg)) {
          ensure_grad(*pg);
          for (int i = 0; i < B; ++i)
            for (int j = 0; j < D; ++j)
              pg->grad[j] += self.grad[(int64_t)i * D + j] *
                             xhat[(int64_t)i * D + j];
        }
        if (wants(pb)) {
          ensure_grad(*pb);
          for (int i = 0; i < B; ++i)
            for (int j = 0; j < D; ++j)
              pb->grad[j] += self.grad[(int64_t)i * D + j];
        }
        if (wants(px)) {
          ensure_grad(*px);
          // Standard batch-norm input gradient with batch statistics.
          for (int j = 0; j < D; ++j) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            const double g = pg->value[j];
            for (int i = 0; i < B; ++i) {
              double dxh = self.grad[(int64_t)i * D + j] * g;
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xhat[(int64_t)i * D + j];
            }
            for (int i = 0; i < B; ++i) {
              double dxh = self.grad[(int64_t)i * D + j] * g;
              px->grad[(int64_t)i * D + j] +=
                  inv_std[j] *
                  (dxh - sum_dxhat / B -
                   xhat[(int64_t)i * D + j] * sum_dxhat_xhat / B);
            }
          }
        }
      });
}

Var batchnorm_eval(const Var& x, const Var& gamma, const Var& beta,
                   const Tensor& running_mean, const Tensor& running_var,
                   double eps) {
  const bool vec = x->value.ndim() == 1;
  const int B = vec ? 1 : x->value.dim(0);
  const int D = vec ? x->value.dim(0) : x->value.dim(1);
  Tensor inv_std({D});
  for (int j = 0; j < D; ++j)
    inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
  Tensor y(x->value.shape);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < D; ++j)
      y[(int64_t)i * D + j] =
          gamma->value[j] * (x->value[(int64_t)i * D + j] - running_mean[j]) *
              inv_std[j] +
          beta->value[j];
  Tensor rm = running_mean;
  return make_op(std::move(y), {x, gamma, beta},
                 [inv_std, rm, B, D](Node& self) {
                   const Var& px = self.parents[0];
                   const Var& pg = self.parents[1];
                   const Var& pb = self.parents[2];
                   if (wants(pg)) {
                     ensure_grad(*pg);
                     for (int i = 0; i < B; ++i)
                       for (int j = 0; j < D; ++j)
                         pg->grad[j] += self.grad[(int64_t)i * D + j] *
                                        (px->value[(int64_t)i * D + j] - rm[j]) *
                                        inv_std[j];
                   }
                   if (wants(pb)) {
                     ensure_grad(*pb);
                     for (int i = 0; i < B; ++i)
                       for (int j = 0; j < D; ++j)
                         pb->grad[j] += self.grad[(int64_t)i * D + j];
                   }
                   if (wants(px)) {
                     ensure_grad(*px);
                     for (int i = 0; i < B; ++i)
                       for (int j = 0; j < D; ++j)
                         px->grad[(int64_t)i * D + j] +=
                             self.grad[(int64_t)i * D + j] * pg->value[j] *
                             inv_std[j];
                   }
                 });
}

Tensor softmax_value(const Tensor& logits) {
  const bool vec = logits.ndim() == 1;
  const int B = vec ? 1 : logits.dim(0);
  const int C = vec ? logits.dim(0) : logits.dim(1);
  Tensor p(logits.shape);
  for (int i = 0; i < B; ++i) {
    const double* row = logits.ptr() + (int64_t)i * C;
    double* out = p.ptr() + (int64_t)i * C;
    double mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      out[c] = std::exp(row[c] - mx);
      z += out[c];
    }
    for (int c = 0; c < C; ++c) out[c] /= z;
  }
  return p;
}

}  // namespace okdad::ad
