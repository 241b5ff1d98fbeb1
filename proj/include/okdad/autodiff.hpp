#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "okdad/tensor.hpp"

// Reverse-mode tape. Node granularity is one layer / one scalar term, so the
// heavy lifting stays inside the kernels and graphs stay small (a few
// thousand nodes per training step).

namespace okdad::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// Named trainable array. Owned by a model; leaves on the tape bind to it and
/// backward() flushes accumulated gradients into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated during backward
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  int64_t id = 0;
};

Var constant(Tensor v);
Var constant_scalar(double v);
Var leaf(Parameter& p);

/// Backpropagate from a scalar root, then flush leaf gradients into their
/// bound Parameters (accumulating, so callers zero grads between steps).
void backward(const Var& root);

// -- tensor ops -------------------------------------------------------------

// x: [B,T,Ci,H,W] -> [B,T,Co,Ho,Wo]; kernel 3x3 unless kh/kw given.
Var conv_spatial(const Var& x, const Var& w, const Var& b, int stride,
                 int pad);
// x: [B,T,Ci,H,W] -> [B,To,Co,H,W]; kernel w: [Co,Ci,kt].
Var conv_temporal(const Var& x, const Var& w, const Var& b, int stride,
                  int pad);
Var relu(const Var& x);
Var add(const Var& x, const Var& y);             // same shape
Var mul(const Var& x, const Var& y);             // hadamard, same shape
Var global_pool(const Var& x);                   // [B,T,C,H,W] -> [B,C]
// y = x * W^T (+ b); x: [B,n] or [n], W: [m,n], b: [m] or null.
Var linear(const Var& x, const Var& W, const Var& b);
Var sigmoid(const Var& x);
Var tanh_v(const Var& x);
Var slice(const Var& x, int64_t offset, int64_t len);  // flat view copy
Var scale(const Var& x, const Var& s);           // s: scalar [1]
Var scale_const(const Var& x, double c);

// -- scalar ops (shape [1]) ---------------------------------------------------

Var s_add(const Var& a, const Var& b);
Var s_sub(const Var& a, const Var& b);
Var s_mul(const Var& a, const Var& b);
Var s_div(const Var& a, const Var& b);
Var s_sqrt(const Var& a);
/// ln of a clamped to [lo, 1]; gradient zero outside the clamp window.
Var s_log_clamped(const Var& a, double lo);
Var dot(const Var& u, const Var& v);
/// sum_i w[i] * items[i]; items are scalars.
Var weighted_sum(const std::vector<Var>& items, const std::vector<double>& w);
Var mean_of(const std::vector<Var>& items);

/// Cosine of the angle between two vectors; throws on zero norm.
Var cosine(const Var& u, const Var& v);

/// Mean softmax cross-entropy over rows of logits [B,C] against labels [B].
Var softmax_ce(const Var& logits, const std::vector<int>& labels);
/// Binary cross-entropy of probability p (scalar var) against target y,
/// with ln arguments clamped below at eps.
Var bce(const Var& p, double target, double eps);

// Batch normalization over rows of x [B,D]. Training mode uses batch
// statistics (biased variance) and updates running stats in place; eval mode
// uses the running stats and works for any batch size.
Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta,
                    Tensor* running_mean, Tensor* running_var,
                    double momentum, double eps);
Var batchnorm_eval(const Var& x, const Var& gamma, const Var& beta,
                   const Tensor& running_mean, const Tensor& running_var,
                   double eps);

// -- non-differentiable helpers ----------------------------------------------

/// Row-wise stable softmax of logits [B,C] or [C].
Tensor softmax_value(const Tensor& logits);

}  // namespace okdad::ad
