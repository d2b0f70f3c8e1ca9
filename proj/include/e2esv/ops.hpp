// include/e2esv/ops.hpp

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

#ifndef E2ESV_OPS_HPP_
#define E2ESV_OPS_HPP_

#include <vector>

#include "e2esv/tensor.hpp"

namespace e2esv {

// Reverse-mode tape.  Ops record parent edges and a backward closure on the
// output node while grad recording is enabled and at least one input requires
// grad; Backward() replays the closures in reverse topological order, then
// drops the recorded graph so the tape memory is reclaimed.

bool GradRecordingEnabled();

// RAII guard that disables grad recording in scope (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool prev_;
};

// Builds an op output node.  While recording is on and some parent requires
// grad, the node keeps its parent edges and the op then attaches a backward
// closure; otherwise it is a plain detached value.  Exposed for tests that
// need custom ops.
TensorPtr MakeNode(std::vector<std::size_t> shape, std::vector<double> values,
                   std::vector<TensorPtr> parents);

// Backpropagates from a scalar root (seed gradient 1).
void Backward(const TensorPtr &root);
// Backpropagates from any node with an explicit seed gradient (same size as
// the node).  Used by the checkpointed trainer to resume a cut graph.
void BackwardFrom(const TensorPtr &root, const std::vector<double> &seed);

// --- elementwise / activations -------------------------------------------
TensorPtr Add(const TensorPtr &a, const TensorPtr &b);
TensorPtr Scale(const TensorPtr &a, double c);
TensorPtr Relu(const TensorPtr &x);
TensorPtr Sigmoid(const TensorPtr &x);
TensorPtr Tanh(const TensorPtr &x);
// Rank-1 softmax over the whole vector.
TensorPtr SoftmaxVec(const TensorPtr &x);
// Rank-2 softmax applied independently to each row.
TensorPtr SoftmaxRows(const TensorPtr &x);

// --- linear algebra -------------------------------------------------------
// y = x W^T + b.  x is [n] or [batch x n]; W is [m x n]; b is [m] or null.
TensorPtr Linear(const TensorPtr &x, const TensorPtr &w, const TensorPtr &b);
// y[t] = sum_j m[t][j] v[j];  m is [t x d], v is [d].
TensorPtr MatVec(const TensorPtr &m, const TensorPtr &v);
// Reshape to a new shape with the same element count (values copied).
TensorPtr Reshape(const TensorPtr &x, std::vector<std::size_t> shape);

// --- convolution stack ----------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1.  x is [cin x h x w] or
// [batch x cin x h x w]; k is [cout x cin x 3 x 3].
TensorPtr Conv2d3x3(const TensorPtr &x, const TensorPtr &k);
// 2x2 max pool, stride 2, ceil semantics, over [c x h x w] or
// [batch x c x h x w].
TensorPtr MaxPool2(const TensorPtr &x);

// --- batch normalization --------------------------------------------------
enum class BnMode {
  kTrain,          // batch stats; running stats updated in place
  kTrainNoUpdate,  // batch stats; running stats untouched
  kInfer,          // running stats; requires initialized state
};

struct BatchNormState {
  std::size_t channels = 0;
  std::vector<double> running_mean, running_var;
  bool initialized = false;
  double momentum = 0.9;
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t c = 0)
      : channels(c), running_mean(c, 0.0), running_var(c, 1.0) {}
};

// Per-channel batch statistics reported by a kTrainNoUpdate pass, so a
// caller can apply the running-average updates later in a fixed order.
struct BnBatchStats {
  std::vector<double> mean, var;
};

// x is [batch x c x h x w]; scale/shift are [c] parameters.  In the train
// modes normalization uses the batch statistics over (batch, h, w); in
// kInfer it uses the stored running statistics.
TensorPtr BatchNorm(const TensorPtr &x, const TensorPtr &scale,
                    const TensorPtr &shift, BatchNormState *state, BnMode mode,
                    BnBatchStats *stats_out = nullptr);

// running <- momentum * running + (1 - momentum) * batch, and marks the
// state initialized.  Fixed call order = deterministic running stats.
void ApplyBnUpdate(BatchNormState *state, const BnBatchStats &stats);

// --- losses ---------------------------------------------------------------
// Mean cross-entropy of softmax(logits) against integer labels.
// logits is [batch x classes].
TensorPtr CrossEntropyMean(const TensorPtr &logits,
                           const std::vector<int> &labels);
// Mean binary cross-entropy with logits.  Probabilities are clamped to
// [1e-12, 1 - 1e-12] before the logs so extreme scores cannot produce inf.
TensorPtr BceWithLogitsMean(const TensorPtr &logits,
                            const std::vector<double> &targets);

// --- scoring / pooling primitives ----------------------------------------
// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
TensorPtr Cosine(const TensorPtr &a, const TensorPtr &b);
// z_i = w * s_i + b with scalar parameters w, b.
TensorPtr AffineScalar(const TensorPtr &s, const TensorPtr &w,
                       const TensorPtr &b);
TensorPtr StackScalars(const std::vector<TensorPtr> &scalars);
TensorPtr AverageVectors(const std::vector<TensorPtr> &vectors);
// Column means of a [t x d] matrix -> [d].
TensorPtr MeanRows(const TensorPtr &m);
// Posterior-weighted Kronecker pooling: with weights w (either alpha, a
// [t] tensor, or uniform 1/t when alpha is null),
//   f[k*d + j] = sum_t w[t] * gamma[t][k] * h[t][j].
// gamma is plain data ([t x k], no gradient); h and alpha receive gradients.
TensorPtr KronPool(const TensorPtr &h, const Tensor &gamma,
                   const TensorPtr &alpha);

}  // namespace e2esv

#endif  // E2ESV_OPS_HPP_
