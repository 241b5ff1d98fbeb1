#include "okdad/kernels.hpp"

namespace okdad::kern {

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace serial {

void gemm(bool ta, bool tb, int m, int n, int k, const double* A,
          const double* B, double* C, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) {
        double a = ta ? A[(int64_t)l * m + i] : A[(int64_t)i * k + l];
        double b = tb ? B[(int64_t)j * k + l] : B[(int64_t)l * n + j];
        acc += a * b;
      }
      double* c = &C[(int64_t)i * n + j];
      *c = accumulate ? *c + acc : acc;
    }
  }
}

void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int F, int Ci, int H, int W, int Co, int kh, int kw,
                int stride, int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
  for (int f = 0; f < F; ++f)
    for (int co = 0; co < Co; ++co)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < Ci; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                int h = ho * stride + i - pad;
                int v = wo * stride + j - pad;
                if (h < 0 || h >= H || v < 0 || v >= W) continue;
                acc += x[(((int64_t)f * Ci + ci) * H + h) * W + v] *
                       w[(((int64_t)co * Ci + ci) * kh + i) * kw + j];
              }
          y[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo] = acc;
        }
}

void conv2d_bwd_input(const double* dy, const double* w, double* dx, int F,
                      int Ci, int H, int W, int Co, int kh, int kw, int stride,
                      int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
  for (int f = 0; f < F; ++f)
    for (int ci = 0; ci < Ci; ++ci)
      for (int h = 0; h < H; ++h)
        for (int v = 0; v < W; ++v) {
          double acc = 0.0;
          for (int co = 0; co < Co; ++co)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                int hn = h + pad - i;
                int vn = v + pad - j;
                if (hn < 0 || vn < 0 || hn % stride || vn % stride) continue;
                int ho = hn / stride, wo = vn / stride;
                if (ho >= Ho || wo >= Wo) continue;
                acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo] *
                       w[(((int64_t)co * Ci + ci) * kh + i) * kw + j];
              }
          dx[(((int64_t)f * Ci + ci) * H + h) * W + v] += acc;
        }
}

void conv2d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int F, int Ci, int H, int W, int Co, int kh,
                       int kw, int stride, int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
  for (int co = 0; co < Co; ++co) {
    for (int ci = 0; ci < Ci; ++ci)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          double acc = 0.0;
          for (int f = 0; f < F; ++f)
            for (int ho = 0; ho < Ho; ++ho)
              for (int wo = 0; wo < Wo; ++wo) {
                int h = ho * stride + i - pad;
                int v = wo * stride + j - pad;
                if (h < 0 || h >= H || v < 0 || v >= W) continue;
                acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo] *
                       x[(((int64_t)f * Ci + ci) * H + h) * W + v];
              }
          dw[(((int64_t)co * Ci + ci) * kh + i) * kw + j] += acc;
        }
    if (db) {
      double acc = 0.0;
      for (int f = 0; f < F; ++f)
        for (int ho = 0; ho < Ho; ++ho)
          for (int wo = 0; wo < Wo; ++wo)
            acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo];
      db[co] += acc;
    }
  }
}

void conv1d_fwd(const double* x, const double* w, const double* bias,
                double* y, int B, int T, int Ci, int S, int Co, int kt,
                int stride, int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
  for (int b = 0; b < B; ++b)
    for (int to = 0; to < To; ++to)
      for (int co = 0; co < Co; ++co)
        for (int s = 0; s < S; ++s) {
          double acc = bias ? bias[co] : 0.0;
          for (int i = 0; i < kt; ++i) {
            int t = to * stride + i - pad;
            if (t < 0 || t >= T) continue;
            for (int ci = 0; ci < Ci; ++ci)
              acc += x[(((int64_t)b * T + t) * Ci + ci) * S + s] *
                     w[((int64_t)co * Ci + ci) * kt + i];
          }
          y[(((int64_t)b * To + to) * Co + co) * S + s] = acc;
        }
}

void conv1d_bwd_input(const double* dy, const double* w, double* dx, int B,
                      int T, int Ci, int S, int Co, int kt, int stride,
                      int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int ci = 0; ci < Ci; ++ci)
        for (int s = 0; s < S; ++s) {
          double acc = 0.0;
          for (int i = 0; i < kt; ++i) {
            int tn = t + pad - i;
            if (tn < 0 || tn % stride) continue;
            int to = tn / stride;
            if (to >= To) continue;
            for (int co = 0; co < Co; ++co)
              acc += dy[(((int64_t)b * To + to) * Co + co) * S + s] *
                     w[((int64_t)co * Ci + ci) * kt + i];
          }
          dx[(((int64_t)b * T + t) * Ci + ci) * S + s] += acc;
        }
}

void conv1d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int B, int T, int Ci, int S, int Co, int kt,
                       int stride, int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
  for (int co = 0; co < Co; ++co) {
    for (int ci = 0; ci < Ci; ++ci)
      for (int i = 0; i < kt; ++i) {
        double acc = 0.0;
        for (int b = 0; b < B; ++b)
          for (int to = 0; to < To; ++to) {
            int t = to * stride + i - pad;
            if (t < 0 || t >= T) continue;
            for (int s = 0; s < S; ++s)
              acc += dy[(((int64_t)b * To + to) * Co + co) * S + s] *
                     x[(((int64_t)b * T + t) * Ci + ci) * S + s];
          }
        dw[((int64_t)co * Ci + ci) * kt + i] += acc;
      }
    if (db) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b)
        for (int to = 0; to < To; ++to)
          for (int s = 0; s < S; ++s)
            acc += dy[(((int64_t)b * To + to) * Co + co) * S + s];
      db[co] += acc;
    }
  }
}

void relu_fwd(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

void gpool_fwd(const double* x, double* y, int B, int T, int C, int S) {
  const double inv = 1.0 / ((double)T * (double)S);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int t = 0; t < T; ++t)
        for (int s = 0; s < S; ++s)
          acc += x[(((int64_t)b * T + t) * C + c) * S + s];
      y[(int64_t)b * C + c] = acc * inv;
    }
}

void gpool_bwd(const double* dy, double* dx, int B, int T, int C, int S) {
  const double inv = 1.0 / ((double)T * (double)S);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double g = dy[(int64_t)b * C + c] * inv;
      for (int t = 0; t < T; ++t)
        for (int s = 0; s < S; ++s)
          dx[(((int64_t)b * T + t) * C + c) * S + s] += g;
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP versions. Work is split over independent output elements only; the
// per-element accumulation order matches the serial reference exactly.
// ---------------------------------------------------------------------------

void gemm(bool ta, bool tb, int m, int n, int k, const double* A,
          const double* B, double* C, bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 1 && (int64_t)m * n * k > 16384)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) {
        double a = ta ? A[(int64_t)l * m + i] : A[(int64_t)i * k + l];
        double b = tb ? B[(int64_t)j * k + l] : B[(int64_t)l * n + j];
        acc += a * b;
      }
      double* c = &C[(int64_t)i * n + j];
      *c = accumulate ? *c + acc : acc;
    }
  }
}

void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int F, int Ci, int H, int W, int Co, int kh, int kw,
                int stride, int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
  const int64_t rows = (int64_t)F * Co;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int f = (int)(r / Co);
    const int co = (int)(r % Co);
    const double* xf = x + (int64_t)f * Ci * H * W;
    double* yr = y + (((int64_t)f * Co + co) * Ho) * Wo;
    const double* wc = w + (int64_t)co * Ci * kh * kw;
    for (int ho = 0; ho < Ho; ++ho)
      for (int wo = 0; wo < Wo; ++wo) {
        double acc = bias ? bias[co] : 0.0;
        for (int ci = 0; ci < Ci; ++ci)
          for (int i = 0; i < kh; ++i) {
            int h = ho * stride + i - pad;
            if (h < 0 || h >= H) continue;
            const double* xrow = xf + ((int64_t)ci * H + h) * W;
            const double* wrow = wc + ((int64_t)ci * kh + i) * kw;
            for (int j = 0; j < kw; ++j) {
              int v = wo * stride + j - pad;
              if (v < 0 || v >= W) continue;
              acc += xrow[v] * wrow[j];
            }
          }
        yr[(int64_t)ho * Wo + wo] = acc;
      }
  }
}

void conv2d_bwd_input(const double* dy, const double* w, double* dx, int F,
                      int Ci, int H, int W, int Co, int kh, int kw, int stride,
                      int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
  const int64_t rows = (int64_t)F * Ci;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int f = (int)(r / Ci);
    const int ci = (int)(r % Ci);
    for (int h = 0; h < H; ++h)
      for (int v = 0; v < W; ++v) {
        double acc = 0.0;
        for (int co = 0; co < Co; ++co)
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              int hn = h + pad - i;
              int vn = v + pad - j;
              if (hn < 0 || vn < 0 || hn % stride || vn % stride) continue;
              int ho = hn / stride, wo = vn / stride;
              if (ho >= Ho || wo >= Wo) continue;
              acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo] *
                     w[(((int64_t)co * Ci + ci) * kh + i) * kw + j];
            }
        dx[(((int64_t)f * Ci + ci) * H + h) * W + v] += acc;
      }
  }
}

void conv2d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int F, int Ci, int H, int W, int Co, int kh,
                       int kw, int stride, int pad) {
  const int Ho = conv_out_dim(H, kh, stride, pad);
  const int Wo = conv_out_dim(W, kw, stride, pad);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    for (int ci = 0; ci < Ci; ++ci)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          double acc = 0.0;
          for (int f = 0; f < F; ++f)
            for (int ho = 0; ho < Ho; ++ho)
              for (int wo = 0; wo < Wo; ++wo) {
                int h = ho * stride + i - pad;
                int v = wo * stride + j - pad;
                if (h < 0 || h >= H || v < 0 || v >= W) continue;
                acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo] *
                       x[(((int64_t)f * Ci + ci) * H + h) * W + v];
              }
          dw[(((int64_t)co * Ci + ci) * kh + i) * kw + j] += acc;
        }
    if (db) {
      double acc = 0.0;
      for (int f = 0; f < F; ++f)
        for (int ho = 0; ho < Ho; ++ho)
          for (int wo = 0; wo < Wo; ++wo)
            acc += dy[(((int64_t)f * Co + co) * Ho + ho) * Wo + wo];
      db[co] += acc;
    }
  }
}

void conv1d_fwd(const double* x, const double* w, const double* bias,
                double* y, int B, int T, int Ci, int S, int Co, int kt,
                int stride, int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
  const int64_t rows = (int64_t)B * To * Co;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int b = (int)(r / ((int64_t)To * Co));
    const int to = (int)((r / Co) % To);
    const int co = (int)(r % Co);
    double* yr = y + (((int64_t)b * To + to) * Co + co) * S;
    for (int s = 0; s < S; ++s) yr[s] = bias ? bias[co] : 0.0;
    for (int i = 0; i < kt; ++i) {
      int t = to * stride + i - pad;
      if (t < 0 || t >= T) continue;
      for (int ci = 0; ci < Ci; ++ci) {
        const double wv = w[((int64_t)co * Ci + ci) * kt + i];
        const double* xr = x + (((int64_t)b * T + t) * Ci + ci) * S;
        for (int s = 0; s < S; ++s) yr[s] += wv * xr[s];
      }
    }
  }
}

void conv1d_bwd_input(const double* dy, const double* w, double* dx, int B,
                      int T, int Ci, int S, int Co, int kt, int stride,
                      int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
  const int64_t rows = (int64_t)B * T * Ci;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int b = (int)(r / ((int64_t)T * Ci));
    const int t = (int)((r / Ci) % T);
    const int ci = (int)(r % Ci);
    double* dxr = dx + (((int64_t)b * T + t) * Ci + ci) * S;
    for (int i = 0; i < kt; ++i) {
      int tn = t + pad - i;
      if (tn < 0 || tn % stride) continue;
      int to = tn / stride;
      if (to >= To) continue;
      for (int co = 0; co < Co; ++co) {
        const double wv = w[((int64_t)co * Ci + ci) * kt + i];
        const double* dyr = dy + (((int64_t)b * To + to) * Co + co) * S;
        for (int s = 0; s < S; ++s) dxr[s] += wv * dyr[s];
      }
    }
  }
}

void conv1d_bwd_params(const double* dy, const double* x, double* dw,
                       double* db, int B, int T, int Ci, int S, int Co, int kt,
                       int stride, int pad) {
  const int To = conv_out_dim(T, kt, stride, pad);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    for (int ci = 0; ci < Ci; ++ci)
      for (int i = 0; i < kt; ++i) {
        double acc = 0.0;
        for (int b = 0; b < B; ++b)
          for (int to = 0; to < To; ++to) {
            int t = to * stride + i - pad;
            if (t < 0 || t >= T) continue;
            const double* dyr = dy + (((int64_t)b * To + to) * Co + co) * S;
            const double* xr = x + (((int64_t)b * T + t) * Ci + ci) * S;
            for (int s = 0; s < S; ++s) acc += dyr[s] * xr[s];
          }
        dw[((int64_t)co * Ci + ci) * kt + i] += acc;
      }
    if (db) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b)
        for (int to = 0; to < To; ++to) {
          const double* dyr = dy + (((int64_t)b * To + to) * Co + co) * S;
          for (int s = 0; s < S; ++s) acc += dyr[s];
        }
      db[co] += acc;
    }
  }
}

void relu_fwd(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

void gpool_fwd(const double* x, double* y, int B, int T, int C, int S) {
  const double inv = 1.0 / ((double)T * (double)S);
  const int64_t rows = (int64_t)B * C;
#pragma omp parallel for schedule(static) if (rows > 4)
  for (int64_t r = 0; r < rows; ++r) {
    const int b = (int)(r / C);
    const int c = (int)(r % C);
    double acc = 0.0;
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s)
        acc += x[(((int64_t)b * T + t) * C + c) * S + s];
    y[(int64_t)b * C + c] = acc * inv;
  }
}

void gpool_bwd(const double* dy, double* dx, int B, int T, int C, int S) {
  const double inv = 1.0 / ((double)T * (double)S);
  const int64_t rows = (int64_t)B * C;
#pragma omp parallel for schedule(static) if (rows > 4)
  for (int64_t r = 0; r < rows; ++r) {
    const int b = (int)(r / C);
    const int c = (int)(r % C);
    double g = dy[(int64_t)b * C + c] * inv;
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s)
        dx[(((int64_t)b * T + t) * C + c) * S + s] += g;
  }
}

void add_fwd(const double* x, const double* z, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] + z[i];
}

void axpy(double a, const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace okdad::kern
