// include/e2esv/kernels.hpp

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

#ifndef E2ESV_KERNELS_HPP_
#define E2ESV_KERNELS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>

// Dense f64 kernels behind the tensor engine.  Every kernel exists in two
// variants: a plain serial reference (namespace serial) and an OpenMP
// version (namespace parallel).  The parallel versions partition the OUTPUT
// index space, so each output element is still produced by one thread as a
// single fixed-order serial reduction — results are bitwise identical to the
// serial reference at any thread count.  The unqualified entry points
// dispatch on the process-wide parallel flag.

namespace e2esv {
namespace kernels {

// Global execution mode.  SetParallelEnabled(false) forces the serial
// reference everywhere (used by tests and --threads 1).
bool ParallelEnabled();
void SetParallelEnabled(bool enabled);
// Caps omp threads; n <= 0 keeps the runtime default.
void SetThreadCount(int n);
int MaxThreads();

// C[m x n] = A[m x k] * B[k x n] + beta * C.  Row-major, beta in {0, 1}.
void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta);

// C[m x n] = A[m x l] * B[n x l]^T + beta * C.  (B stored row-major n x l.)
void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);

// C[m x n] = A[l x m]^T * B[l x n] + beta * C.
void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);

// im2col for a 3x3 kernel with zero padding 1 and stride 1 over a single
// sample laid out [cin x h x w].  Output is [cin*9 x h*w] row-major: row
// (c*9 + dh*3 + dw), column (y*w + x) holds in[c][y+dh-1][x+dw-1] (or 0).
void Im2ColK3(const double *in, std::size_t cin, std::size_t h, std::size_t w,
              double *cols);

// 2x2 max pooling with stride 2 and ceil semantics over [count x h x w]
// planes (count = batch*channels).  out is [count x ho x wo] with
// ho = (h+1)/2, wo = (w+1)/2.  argmax records the flat input index of each
// maximum (smallest flat index wins ties) and is what the backward pass
// scatters into.
void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax);

// Scatters dout through the recorded argmax indices; din must be zeroed by
// the caller (accumulates).
void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din);

// Runs fn(item, scratch) for item in [0, n).  Items must be independent and
// write disjoint outputs; iteration order is unspecified under OpenMP.  Each
// invocation gets a scratch buffer of scratch_elems doubles private to the
// executing thread (uninitialized).  Serial mode runs items in order with a
// single scratch buffer.
void ParallelForWithScratch(std::size_t n, std::size_t scratch_elems,
                            const std::function<void(std::size_t, double *)> &fn);

namespace serial {
void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta);
void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);
void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);
void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax);
void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din);
}  // namespace serial

namespace parallel {
void Gemm(std::size_t m, std::size_t n, std::size_t k, const double *a,
          const double *b, double *c, double beta);
void GemmNT(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);
void GemmTN(std::size_t m, std::size_t n, std::size_t l, const double *a,
            const double *b, double *c, double beta);
void MaxPool2Forward(const double *in, std::size_t count, std::size_t h,
                     std::size_t w, double *out, int64_t *argmax);
void MaxPool2Backward(const double *dout, const int64_t *argmax,
                      std::size_t n_out, double *din);
}  // namespace parallel

namespace detail {
// Shared microkernel: computes the C tile [i0, i0+mb) x [0, n) of
// C = A * B (+ beta C) for row-major operands.  Both the serial and the
// OpenMP variant call this with identical arguments, which is what makes
// them bitwise equal.
void GemmRowBlock(std::size_t i0, std::size_t mb, std::size_t n, std::size_t k,
                  const double *a, std::size_t lda, const double *b,
                  std::size_t ldb, double *c, std::size_t ldc, double beta);
void GemmNTRowBlock(std::size_t i0, std::size_t mb, std::size_t n,
                    std::size_t l, const double *a, const double *b, double *c,
                    double beta);
// lda is the row stride of A (the full output row count m).
void GemmTNRowBlock(std::size_t i0, std::size_t mb, std::size_t n,
                    std::size_t l, const double *a, std::size_t lda,
                    const double *b, double *c, double beta);
void PoolPlane(const double *in, std::size_t h, std::size_t w, double *out,
               int64_t *argmax, std::size_t plane_in_offset);
}  // namespace detail

}  // namespace kernels
}  // namespace e2esv

#endif  // E2ESV_KERNELS_HPP_
