// Benchmark of the OpenMP kernels against their serial reference
// implementations. Prints wall time, speedup and the max elementwise
// difference (expected to be exactly 0: the parallel kernels keep the serial
// per-element accumulation order).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "okdad/kernels.hpp"
#include "okdad/rng.hpp"

using namespace okdad;
namespace k = okdad::kern;
using clock_type = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(clock_type::now() - t0).count() / reps;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void fill(std::vector<double>& v, rng::Stream& rs) {
  for (auto& x : v) x = rs.uniform(-1, 1);
}

void row(const char* name, double serial_s, double parallel_s, double diff,
         double gflop) {
  std::printf("%-22s %9.3f ms %9.3f ms  x%4.2f  %6.2f GF/s  maxdiff %g\n",
              name, serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              gflop / parallel_s, diff);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-22s %12s %12s %7s %12s\n", "kernel", "serial", "parallel",
              "speedup", "throughput");
  rng::Stream rs(1);

  {  // gemm 256x256x256
    const int n = 256;
    std::vector<double> A(n * n), B(n * n), C1(n * n), C2(n * n);
    fill(A, rs);
    fill(B, rs);
    const double ts = time_of(
        [&] { k::serial::gemm(false, false, n, n, n, A.data(), B.data(),
                              C1.data(), false); },
        3);
    const double tp = time_of(
        [&] { k::gemm(false, false, n, n, n, A.data(), B.data(), C2.data(),
                      false); },
        3);
    row("gemm 256^3", ts, tp, max_diff(C1, C2), 2.0 * n * n * n * 1e-9);
  }

  {  // spatial conv: 30 frames, 8->16 channels, 24x24
    const int F = 30, Ci = 8, Co = 16, H = 24, W = 24;
    std::vector<double> x(F * Ci * H * W), w(Co * Ci * 9), b(Co);
    fill(x, rs);
    fill(w, rs);
    fill(b, rs);
    std::vector<double> y1((size_t)F * Co * H * W), y2(y1.size());
    const double ts = time_of(
        [&] { k::serial::conv2d_fwd(x.data(), w.data(), b.data(), y1.data(),
                                    F, Ci, H, W, Co, 3, 3, 1, 1); },
        3);
    const double tp = time_of(
        [&] { k::conv2d_fwd(x.data(), w.data(), b.data(), y2.data(), F, Ci, H,
                            W, Co, 3, 3, 1, 1); },
        3);
    row("conv2d 30f 8->16", ts, tp, max_diff(y1, y2),
        2.0 * F * Co * H * W * Ci * 9 * 1e-9);
  }

  {  // temporal conv: batch 4, T 15, 16 channels, 144 positions
    const int B = 4, T = 15, Ci = 16, Co = 16, S = 144;
    std::vector<double> x((size_t)B * T * Ci * S), w(Co * Ci * 3), b(Co);
    fill(x, rs);
    fill(w, rs);
    fill(b, rs);
    std::vector<double> y1((size_t)B * T * Co * S), y2(y1.size());
    const double ts = time_of(
        [&] { k::serial::conv1d_fwd(x.data(), w.data(), b.data(), y1.data(),
                                    B, T, Ci, S, Co, 3, 1, 1); },
        5);
    const double tp = time_of(
        [&] { k::conv1d_fwd(x.data(), w.data(), b.data(), y2.data(), B, T,
                            Ci, S, Co, 3, 1, 1); },
        5);
    row("conv1d b4 t15 c16", ts, tp, max_diff(y1, y2),
        2.0 * B * T * Co * S * Ci * 3 * 1e-9);
  }

  {  // conv2d backward over parameters
    const int F = 30, Ci = 8, Co = 16, H = 24, W = 24;
    std::vector<double> x((size_t)F * Ci * H * W), dy((size_t)F * Co * H * W);
    fill(x, rs);
    fill(dy, rs);
    std::vector<double> dw1(Co * Ci * 9, 0), dw2(Co * Ci * 9, 0), db1(Co, 0),
        db2(Co, 0);
    const double ts = time_of(
        [&] {
          std::fill(dw1.begin(), dw1.end(), 0.0);
          std::fill(db1.begin(), db1.end(), 0.0);
          k::serial::conv2d_bwd_params(dy.data(), x.data(), dw1.data(),
                                       db1.data(), F, Ci, H, W, Co, 3, 3, 1,
                                       1);
        },
        3);
    const double tp = time_of(
        [&] {
          std::fill(dw2.begin(), dw2.end(), 0.0);
          std::fill(db2.begin(), db2.end(), 0.0);
          k::conv2d_bwd_params(dy.data(), x.data(), dw2.data(), db2.data(), F,
                               Ci, H, W, Co, 3, 3, 1, 1);
        },
        3);
    row("conv2d bwd params", ts, tp, max_diff(dw1, dw2),
        2.0 * F * Co * H * W * Ci * 9 * 1e-9);
  }

  return 0;
}
