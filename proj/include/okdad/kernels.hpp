#pragma once

#include <cstdint>

// Numeric kernels behind the differentiable ops. The parallel versions in
// okdad::kern are the production path; okdad::kern::serial holds the naive
// reference implementations the tests compare against.
//
// Parallel kernels only ever split work across *independent output elements*
// and keep the per-element accumulation order identical to the serial
// reference. Results are therefore bit-identical to serial regardless of
// thread count, which is what makes whole training runs reproducible.

namespace okdad::kern {

// C[m x n] = (or +=) op(A) * op(B), op controlled by ta/tb.
// A is [m x k] (or [k x m] if ta), B is [k x n] (or [n x k] if tb).
void gemm(bool ta, bool tb, int m, int n, int k, const double* A,
          const double* B, double* C, bool accumulate);

// Spatial 2-D convolution over a stack of frames.
// x: [F x Ci x H x W], w: [Co x Ci x kh x kw], bias: [Co] (may be null),
// y: [F x Co x Ho x Wo] with Ho = (H + 2*pad - kh)/stride + 1.
void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int F, int Ci, int H, int W, int Co, int kh, int kw,
                int stride, int pad);
// Accumulates into dx (caller zeroes).
void conv2d_bwd_input(const double* dy, const double* w, double* dx, int F,
                      int Ci, int H, int W, int Co, int kh, int kw, int stride,
                      int pad);
// Accumulates into dw/db (caller zeroes). db may be null.
void conv2d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int F, int Ci, int H, int W, int Co, int kh,
                       int kw, int stride, int pad);

// Temporal 1-D convolution, applied at every spatial position.
// x: [B x T x Ci x S], w: [Co x Ci x kt], bias: [Co] (may be null),
// y: [B x To x Co x S] with To = (T + 2*pad - kt)/stride + 1.
void conv1d_fwd(const double* x, const double* w, const double* bias,
                double* y, int B, int T, int Ci, int S, int Co, int kt,
                int stride, int pad);
void conv1d_bwd_input(const double* dy, const double* w, double* dx, int B,
                      int T, int Ci, int S, int Co, int kt, int stride,
                      int pad);
void conv1d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int B, int T, int Ci, int S, int Co, int kt,
                       int stride, int pad);

void relu_fwd(const double* x, double* y, int64_t n);
// dx += dy * (x > 0)
void relu_bwd(const double* x, const double* dy, double* dx, int64_t n);

// y[b,c] = mean over (t,s) of x[b,t,c,s]
void gpool_fwd(const double* x, double* y, int B, int T, int C, int S);
// dx += dy[b,c] / (T*S)
void gpool_bwd(const double* dy, double* dx, int B, int T, int C, int S);

// y = x + z elementwise; bwd is trivial and handled by callers.
void add_fwd(const double* x, const double* z, double* y, int64_t n);
// y += a * x
void axpy(double a, const double* x, double* y, int64_t n);

namespace serial {
void gemm(bool ta, bool tb, int m, int n, int k, const double* A,
          const double* B, double* C, bool accumulate);
void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int F, int Ci, int H, int W, int Co, int kh, int kw,
                int stride, int pad);
void conv2d_bwd_input(const double* dy, const double* w, double* dx, int F,
                      int Ci, int H, int W, int Co, int kh, int kw, int stride,
                      int pad);
void conv2d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int F, int Ci, int H, int W, int Co, int kh,
                       int kw, int stride, int pad);
void conv1d_fwd(const double* x, const double* w, const double* bias,
                double* y, int B, int T, int Ci, int S, int Co, int kt,
                int stride, int pad);
void conv1d_bwd_input(const double* dy, const double* w, double* dx, int B,
                      int T, int Ci, int S, int Co, int kt, int stride,
                      int pad);
void conv1d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int B, int T, int Ci, int S, int Co, int kt,
                       int stride, int pad);
void relu_fwd(const double* x, double* y, int64_t n);
void relu_bwd(const double* x, const double* dy, double* dx, int64_t n);
void gpool_fwd(const double* x, double* y, int B, int T, int C, int S);
void gpool_bwd(const double* dy, double* dx, int B, int T, int C, int S);
}  // namespace serial

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace okdad::kern
