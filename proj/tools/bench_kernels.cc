// tools/bench_kernels.cc

// Copyright 2026  The e2esv authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Times the serial reference kernels against the OpenMP variants on the
// matrix shapes the engine actually runs, and checks that both produce
// bitwise-identical output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "e2esv/common.hpp"
#include "e2esv/kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double MedianSeconds(const std::function<void()> &fn, int reps) {
  std::vector<double> times;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::vector<double> RandomVec(std::size_t n, e2esv::Rng *rng) {
  std::vector<double> v(n);
  for (double &x : v) x = rng->Uniform(-1.0, 1.0);
  return v;
}

double MaxAbsDiff(const std::vector<double> &a, const std::vector<double> &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

struct GemmCase {
  const char *name;
  // Runs kernel(a, b, c) on the given variant.
  std::function<void(const double *, const double *, double *)> serial_fn;
  std::function<void(const double *, const double *, double *)> parallel_fn;
  std::size_t a_elems, b_elems, c_elems;
  double macs;
};

GemmCase MakeGemm(const char *name, std::size_t m, std::size_t n,
                  std::size_t l, int which) {
  GemmCase c;
  c.name = name;
  c.macs = static_cast<double>(m) * static_cast<double>(n) *
           static_cast<double>(l);
  c.c_elems = m * n;
  if (which == 0) {  // NN: A[m x l] * B[l x n]
    c.a_elems = m * l;
    c.b_elems = l * n;
    c.serial_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::serial::Gemm(m, n, l, a, b, out, 0.0);
    };
    c.parallel_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::parallel::Gemm(m, n, l, a, b, out, 0.0);
    };
  } else if (which == 1) {  // NT: A[m x l] * B[n x l]^T
    c.a_elems = m * l;
    c.b_elems = n * l;
    c.serial_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::serial::GemmNT(m, n, l, a, b, out, 0.0);
    };
    c.parallel_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::parallel::GemmNT(m, n, l, a, b, out, 0.0);
    };
  } else {  // TN: A[l x m]^T * B[l x n]
    c.a_elems = l * m;
    c.b_elems = l * n;
    c.serial_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::serial::GemmTN(m, n, l, a, b, out, 0.0);
    };
    c.parallel_fn = [m, n, l](const double *a, const double *b, double *out) {
      e2esv::kernels::parallel::GemmTN(m, n, l, a, b, out, 0.0);
    };
  }
  return c;
}

}  // namespace

int main() {
  e2esv::Rng rng(7);
  // Shapes drawn from the engine: conv layers as im2col GEMMs over one
  // 31 x 12 window batch (372 output pixels), the DNN ablation layer, the
  // flatten linear, and a generic square case.
  std::vector<GemmCase> cases;
  cases.push_back(MakeGemm("conv1 fwd   372x32x27   NN", 372, 32, 27, 0));
  cases.push_back(MakeGemm("conv2 fwd   372x32x288  NN", 372, 32, 288, 0));
  cases.push_back(MakeGemm("conv4 fwd   96x64x576   NN", 96, 64, 576, 0));
  cases.push_back(MakeGemm("linear fwd  87x64x1536  NN", 87, 64, 1536, 0));
  cases.push_back(MakeGemm("dnn fwd     87x256x1116 NN", 87, 256, 1116, 0));
  cases.push_back(MakeGemm("linear dx   87x1536x64  NN", 87, 1536, 64, 0));
  cases.push_back(MakeGemm("conv2 wgrad 32x288x372  NT", 32, 288, 372, 1));
  cases.push_back(MakeGemm("linear dW   64x1536x87  TN", 64, 1536, 87, 2));
  cases.push_back(MakeGemm("square      256x256x256 NN", 256, 256, 256, 0));

  std::printf("%-28s %12s %12s %8s %10s %10s\n", "case", "serial(ms)",
              "parallel(ms)", "speedup", "GMAC/s", "maxdiff");
  for (GemmCase &c : cases) {
    std::vector<double> a = RandomVec(c.a_elems, &rng);
    std::vector<double> b = RandomVec(c.b_elems, &rng);
    std::vector<double> out_serial(c.c_elems, 0.0);
    std::vector<double> out_parallel(c.c_elems, 0.0);
    const int reps = c.macs > 5e7 ? 5 : 15;
    const double ts = MedianSeconds(
        [&] { c.serial_fn(a.data(), b.data(), out_serial.data()); }, reps);
    const double tp = MedianSeconds(
        [&] { c.parallel_fn(a.data(), b.data(), out_parallel.data()); }, reps);
    const double diff = MaxAbsDiff(out_serial, out_parallel);
    std::printf("%-28s %12.3f %12.3f %8.2f %10.2f %10.2e\n", c.name,
                ts * 1e3, tp * 1e3, ts / tp, c.macs / ts / 1e9, diff);
    if (diff != 0.0) {
      std::printf("MISMATCH: %s differs between serial and parallel\n",
                  c.name);
      return 1;
    }
  }
  std::printf("threads=%d  all serial/parallel outputs identical\n",
              e2esv::kernels::MaxThreads());
  return 0;
}
