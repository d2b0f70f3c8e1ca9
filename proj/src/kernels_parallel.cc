// src/kernels_parallel.cc

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

#include <algorithm>

#include "e2esv/kernels.hpp"

// OpenMP variants.  Work is partitioned over the same 4-row output strips
// the serial reference iterates, and each strip runs the shared microkernel
// with identical arguments, so the output is bitwise equal to serial at any
// thread count.

namespace e2esv {
namespace kernels {
namespace parallel {

void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta) {
  const std::ptrdiff_t strips = static_cast<std::ptrdiff_t>((m + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < strips; ++s) {
    const std::size_t i0 = static_cast<std::size_t>(s) * 4;
    detail::GemmRowBlock(i0, std::min<std::size_t>(4, m - i0), n, k, a, k, b,
                         n, c, n, beta);
  }
}

void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  const std::ptrdiff_t strips = static_cast<std::ptrdiff_t>((m + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < strips; ++s) {
    const std::size_t i0 = static_cast<std::size_t>(s) * 4;
    detail::GemmNTRowBlock(i0, std::min<std::size_t>(4, m - i0), n, l, a, b, c,
                           beta);
  }
}

void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  const std::ptrdiff_t strips = static_cast<std::ptrdiff_t>((m + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < strips; ++s) {
    const std::size_t i0 = static_cast<std::size_t>(s) * 4;
    detail::GemmTNRowBlock(i0, std::min<std::size_t>(4, m - i0), n, l, a, m, b,
                           c, beta);
  }
}

void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax) {
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(count); ++p)
    detail::PoolPlane(in + p * h * w, h, w, out + p * ho * wo,
                      argmax + p * ho * wo, static_cast<std::size_t>(p) * h * w);
}

void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din) {
  // Pool windows are disjoint, so distinct outputs scatter to distinct
  // inputs and the parallel writes never collide.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_out); ++i)
    din[argmax[i]] += dout[i];
}

}  // namespace parallel
}  // namespace kernels
}  // namespace e2esv
