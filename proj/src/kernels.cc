// src/kernels.cc

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

#include "e2esv/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cstring>
#include <vector>

namespace e2esv {
namespace kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool ParallelEnabled() { return g_parallel.load(std::memory_order_relaxed); }

void SetParallelEnabled(bool enabled) {
  g_parallel.store(enabled, std::memory_order_relaxed);
}

void SetThreadCount(int n) {
  if (n <= 0) return;
  omp_set_num_threads(n);
  if (n == 1) SetParallelEnabled(false);
}

int MaxThreads() { return omp_get_max_threads(); }

// Nested parallel regions are never wanted here: when a kernel is already
// running inside a parallel caller (e.g. the per-sample conv loop), the
// inner dispatch stays serial.
static bool UseParallel() { return ParallelEnabled() && !omp_in_parallel(); }

void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta) {
  if (UseParallel())
    parallel::Gemm(m, n, k, a, b, c, beta);
  else
    serial::Gemm(m, n, k, a, b, c, beta);
}

void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  if (UseParallel())
    parallel::GemmNT(m, n, l, a, b, c, beta);
  else
    serial::GemmNT(m, n, l, a, b, c, beta);
}

void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  if (UseParallel())
    parallel::GemmTN(m, n, l, a, b, c, beta);
  else
    serial::GemmTN(m, n, l, a, b, c, beta);
}

void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax) {
  if (UseParallel())
    parallel::MaxPool2Forward(in, count, h, w, out, argmax);
  else
    serial::MaxPool2Forward(in, count, h, w, out, argmax);
}

void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din) {
  if (UseParallel())
    parallel::MaxPool2Backward(dout, argmax, n_out, din);
  else
    serial::MaxPool2Backward(dout, argmax, n_out, din);
}

void Im2ColK3(const double *in, std::size_t cin, std::size_t h, std::size_t w,
              double *cols) {
  // cols[(c*9 + dh*3 + dw)][y*w + x] = in[c][y+dh-1][x+dw-1], zero padded.
  // Written row by row so each cols row is a shifted copy of an input plane
  // with the out-of-range border zeroed.
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    const double *plane = in + c * hw;
    for (int dh = 0; dh < 3; ++dh) {
      for (int dw = 0; dw < 3; ++dw) {
        double *row = cols + (c * 9 + dh * 3 + dw) * hw;
        const int oy = dh - 1, ox = dw - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + oy;
          double *dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::memset(dst, 0, w * sizeof(double));
            continue;
          }
          const double *src = plane + sy * w;
          if (ox == 0) {
            std::memcpy(dst, src, w * sizeof(double));
          } else if (ox < 0) {
            dst[0] = 0.0;
            std::memcpy(dst + 1, src, (w - 1) * sizeof(double));
          } else {
            std::memcpy(dst, src + 1, (w - 1) * sizeof(double));
            dst[w - 1] = 0.0;
          }
        }
      }
    }
  }
}

void ParallelForWithScratch(
    std::size_t n, std::size_t scratch_elems,
    const std::function<void(std::size_t, double *)> &fn) {
  if (UseParallel() && n > 1) {
#pragma omp parallel
    {
      std::vector<double> scratch(scratch_elems);
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        fn(static_cast<std::size_t>(i), scratch.data());
    }
  } else {
    std::vector<double> scratch(scratch_elems);
    for (std::size_t i = 0; i < n; ++i) fn(i, scratch.data());
  }
}

}  // namespace kernels
}  // namespace e2esv
