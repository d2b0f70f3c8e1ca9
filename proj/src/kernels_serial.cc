// src/kernels_serial.cc

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

namespace e2esv {
namespace kernels {
namespace detail {

// Register-blocked microkernels.  MR x NR output tiles are accumulated in
// local arrays that the compiler keeps in vector registers; the k loop is the
// innermost loop and always runs in ascending order, so every C element is
// one fixed-order reduction.  The edge paths reduce in the same order, which
// keeps results independent of where tile boundaries fall, and the OpenMP
// variants call these same blocks — that is what makes serial and parallel
// output bitwise equal.

namespace {
constexpr std::size_t kMr = 4;     // row strip height (also the OMP grain)
constexpr std::size_t kNr = 16;    // column tile width for the NN/TN kernels
}  // namespace

void GemmRowBlock(std::size_t i0, std::size_t mb, std::size_t n, std::size_t k,
                  const double *a, std::size_t lda, const double *b,
                  std::size_t ldb, double *c, std::size_t ldc, double beta) {
  const std::size_t iend = i0 + mb;
  for (std::size_t i = i0; i < iend; i += kMr) {
    const std::size_t mr = std::min(kMr, iend - i);
    std::size_t j = 0;
    if (mr == kMr) {
      for (; j + kNr <= n; j += kNr) {
        double acc0[kNr], acc1[kNr], acc2[kNr], acc3[kNr];
        if (beta == 0.0) {
          for (std::size_t jj = 0; jj < kNr; ++jj)
            acc0[jj] = acc1[jj] = acc2[jj] = acc3[jj] = 0.0;
        } else {
          for (std::size_t jj = 0; jj < kNr; ++jj) {
            acc0[jj] = c[(i + 0) * ldc + j + jj];
            acc1[jj] = c[(i + 1) * ldc + j + jj];
            acc2[jj] = c[(i + 2) * ldc + j + jj];
            acc3[jj] = c[(i + 3) * ldc + j + jj];
          }
        }
        const double *a0 = a + (i + 0) * lda;
        const double *a1 = a + (i + 1) * lda;
        const double *a2 = a + (i + 2) * lda;
        const double *a3 = a + (i + 3) * lda;
        for (std::size_t p = 0; p < k; ++p) {
          const double *brow = b + p * ldb + j;
          const double x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
          // The lanes are independent accumulators, so vectorizing across jj
          // does not reorder any per-element reduction.
#pragma omp simd
          for (std::size_t jj = 0; jj < kNr; ++jj) {
            acc0[jj] += x0 * brow[jj];
            acc1[jj] += x1 * brow[jj];
            acc2[jj] += x2 * brow[jj];
            acc3[jj] += x3 * brow[jj];
          }
        }
        for (std::size_t jj = 0; jj < kNr; ++jj) {
          c[(i + 0) * ldc + j + jj] = acc0[jj];
          c[(i + 1) * ldc + j + jj] = acc1[jj];
          c[(i + 2) * ldc + j + jj] = acc2[jj];
          c[(i + 3) * ldc + j + jj] = acc3[jj];
        }
      }
    }
    // Edge tiles: plain loops, same ascending-k reduction per element.
    for (std::size_t ii = 0; ii < mr; ++ii) {
      const double *arow = a + (i + ii) * lda;
      for (std::size_t jj = j; jj < n; ++jj) {
        double s = (beta == 0.0) ? 0.0 : c[(i + ii) * ldc + jj];
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + jj];
        c[(i + ii) * ldc + jj] = s;
      }
    }
  }
}

namespace {

// dot(A row, B row) with eight interleaved lanes and a fixed reduction tree.
// Every call reduces in exactly this order, so a C element gets the same
// value no matter which caller computed it.
inline double DotLanes(const double *arow, const double *brow,
                       std::size_t l) {
  double lane[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t p = 0;
  for (; p + 8 <= l; p += 8) {
#pragma omp simd
    for (std::size_t q = 0; q < 8; ++q) lane[q] += arow[p + q] * brow[p + q];
  }
  double s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
             ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; p < l; ++p) s += arow[p] * brow[p];
  return s;
}

}  // namespace

void GemmNTRowBlock(std::size_t i0, std::size_t mb, std::size_t n,
                    std::size_t l, const double *a, const double *b, double *c,
                    double beta) {
  // C[i][j] = dot(A row i, B row j): both operands are read contiguously.
  // Four B rows are walked together so the A row is read once per group, but
  // each dot product still reduces in the DotLanes order.
  const std::size_t iend = i0 + mb;
  for (std::size_t i = i0; i < iend; ++i) {
    const double *arow = a + i * l;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double *b0 = b + (j + 0) * l, *b1 = b + (j + 1) * l;
      const double *b2 = b + (j + 2) * l, *b3 = b + (j + 3) * l;
      double l0[8] = {0.0}, l1[8] = {0.0}, l2[8] = {0.0}, l3[8] = {0.0};
      std::size_t p = 0;
      for (; p + 8 <= l; p += 8) {
#pragma omp simd
        for (std::size_t q = 0; q < 8; ++q) {
          const double av = arow[p + q];
          l0[q] += av * b0[p + q];
          l1[q] += av * b1[p + q];
          l2[q] += av * b2[p + q];
          l3[q] += av * b3[p + q];
        }
      }
      double s0 = ((l0[0] + l0[1]) + (l0[2] + l0[3])) +
                  ((l0[4] + l0[5]) + (l0[6] + l0[7]));
      double s1 = ((l1[0] + l1[1]) + (l1[2] + l1[3])) +
                  ((l1[4] + l1[5]) + (l1[6] + l1[7]));
      double s2 = ((l2[0] + l2[1]) + (l2[2] + l2[3])) +
                  ((l2[4] + l2[5]) + (l2[6] + l2[7]));
      double s3 = ((l3[0] + l3[1]) + (l3[2] + l3[3])) +
                  ((l3[4] + l3[5]) + (l3[6] + l3[7]));
      for (; p < l; ++p) {
        const double av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      if (beta != 0.0) {
        s0 += c[i * n + j + 0];
        s1 += c[i * n + j + 1];
        s2 += c[i * n + j + 2];
        s3 += c[i * n + j + 3];
      }
      c[i * n + j + 0] = s0;
      c[i * n + j + 1] = s1;
      c[i * n + j + 2] = s2;
      c[i * n + j + 3] = s3;
    }
    for (; j < n; ++j) {
      double s = DotLanes(arow, b + j * l, l);
      if (beta != 0.0) s += c[i * n + j];
      c[i * n + j] = s;
    }
  }
}

void GemmTNRowBlock(std::size_t i0, std::size_t mb, std::size_t n,
                    std::size_t l, const double *a, std::size_t lda,
                    const double *b, double *c, double beta) {
  // C[i][j] = sum_p A[p][i] * B[p][j] with A stored [l x lda].  Same tile
  // shape as the NN kernel; the A reads are strided column accesses.
  const std::size_t iend = i0 + mb;
  for (std::size_t i = i0; i < iend; i += kMr) {
    const std::size_t mr = std::min(kMr, iend - i);
    std::size_t j = 0;
    if (mr == kMr) {
      for (; j + kNr <= n; j += kNr) {
        double acc0[kNr], acc1[kNr], acc2[kNr], acc3[kNr];
        if (beta == 0.0) {
          for (std::size_t jj = 0; jj < kNr; ++jj)
            acc0[jj] = acc1[jj] = acc2[jj] = acc3[jj] = 0.0;
        } else {
          for (std::size_t jj = 0; jj < kNr; ++jj) {
            acc0[jj] = c[(i + 0) * n + j + jj];
            acc1[jj] = c[(i + 1) * n + j + jj];
            acc2[jj] = c[(i + 2) * n + j + jj];
            acc3[jj] = c[(i + 3) * n + j + jj];
          }
        }
        for (std::size_t p = 0; p < l; ++p) {
          const double *brow = b + p * n + j;
          const double *acol = a + p * lda + i;
          const double x0 = acol[0], x1 = acol[1], x2 = acol[2], x3 = acol[3];
#pragma omp simd
          for (std::size_t jj = 0; jj < kNr; ++jj) {
            acc0[jj] += x0 * brow[jj];
            acc1[jj] += x1 * brow[jj];
            acc2[jj] += x2 * brow[jj];
            acc3[jj] += x3 * brow[jj];
          }
        }
        for (std::size_t jj = 0; jj < kNr; ++jj) {
          c[(i + 0) * n + j + jj] = acc0[jj];
          c[(i + 1) * n + j + jj] = acc1[jj];
          c[(i + 2) * n + j + jj] = acc2[jj];
          c[(i + 3) * n + j + jj] = acc3[jj];
        }
      }
    }
    for (std::size_t ii = 0; ii < mr; ++ii) {
      for (std::size_t jj = j; jj < n; ++jj) {
        double s = (beta == 0.0) ? 0.0 : c[(i + ii) * n + jj];
        for (std::size_t p = 0; p < l; ++p)
          s += a[p * lda + i + ii] * b[p * n + jj];
        c[(i + ii) * n + jj] = s;
      }
    }
  }
}

void PoolPlane(const double *in, std::size_t h, std::size_t w, double *out,
               int64_t *argmax, std::size_t plane_in_offset) {
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const std::size_t y0 = 2 * oy, x0 = 2 * ox;
      const std::size_t y1 = std::min(y0 + 2, h), x1 = std::min(x0 + 2, w);
      double best = in[y0 * w + x0];
      std::size_t best_idx = y0 * w + x0;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          const double v = in[y * w + x];
          if (v > best) {  // strict: ties keep the smallest flat index
            best = v;
            best_idx = y * w + x;
          }
        }
      }
      out[oy * wo + ox] = best;
      argmax[oy * wo + ox] =
          static_cast<int64_t>(plane_in_offset + best_idx);
    }
  }
}

}  // namespace detail

namespace serial {

void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta) {
  for (std::size_t i0 = 0; i0 < m; i0 += 4)
    detail::GemmRowBlock(i0, std::min<std::size_t>(4, m - i0), n, k, a, k, b,
                         n, c, n, beta);
}

void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  for (std::size_t i0 = 0; i0 < m; i0 += 4)
    detail::GemmNTRowBlock(i0, std::min<std::size_t>(4, m - i0), n, l, a, b, c,
                           beta);
}

void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta) {
  for (std::size_t i0 = 0; i0 < m; i0 += 4)
    detail::GemmTNRowBlock(i0, std::min<std::size_t>(4, m - i0), n, l, a, m, b,
                           c, beta);
}

void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax) {
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  for (std::size_t p = 0; p < count; ++p)
    detail::PoolPlane(in + p * h * w, h, w, out + p * ho * wo,
                      argmax + p * ho * wo, p * h * w);
}

void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din) {
  for (std::size_t i = 0; i < n_out; ++i) din[argmax[i]] += dout[i];
}

}  // namespace serial
}  // namespace kernels
}  // namespace e2esv
