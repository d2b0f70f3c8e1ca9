// include/e2esv/pooling.hpp

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

#ifndef E2ESV_POOLING_HPP_
#define E2ESV_POOLING_HPP_

#include <string>
#include <vector>

#include "e2esv/ops.hpp"

namespace e2esv {

// Utterance-level aggregation of frame features h_t ([T x 64]):
//  - kMean:      f = (1/T) sum_t h_t                       (64 dims)
//  - kPosterior: f = sum_t (1/T) kron(gamma_t, h_t)        (640 dims)
//  - kAttention: f = sum_t alpha_t kron(gamma_t, h_t) with
//        e_t = tanh(w_h . h_t + w_b . b_t),  alpha = softmax(e)
//    where b_t is the phone bottleneck feature of frame t.
enum class PoolingKind { kMean, kPosterior, kAttention };

std::string PoolingKindName(PoolingKind kind);
PoolingKind ParsePoolingKind(const std::string &name);  // UsageError

// Learned attention parameters, one weight vector per input stream.  Zero
// initialization makes every e_t = 0, i.e. uniform attention: the attention
// pooler starts out exactly equal to the posterior pooler.
struct AttentionParams {
  TensorPtr wh;  // [64], applied to the speaker-net frame feature
  TensorPtr wb;  // [64], applied to the phone bottleneck feature
};
AttentionParams InitAttention();

// Utterance supervector with its pooling provenance.  Kronecker-structured
// poolers produce 640 dims, mean pooling 64.
struct Supervector {
  PoolingKind kind = PoolingKind::kMean;
  std::vector<double> values;
};
std::size_t SupervectorDim(PoolingKind kind);

struct PoolResult {
  TensorPtr supervector;
  TensorPtr alpha;  // attention weights [T]; null for the other kinds
};

// Graph-building pooling over frame features.  gamma ([T x 10]) and
// bottleneck ([T x 64]) are plain data from the frozen phone net; gradients
// flow into h and (for attention) into the attention parameters.  att may be
// null unless kind == kAttention.
PoolResult PoolFrames(PoolingKind kind, const TensorPtr &h,
                      const Tensor &gamma, const Tensor &bottleneck,
                      const AttentionParams *att);

// Value-only pooling for inference; optionally reports the attention
// weights.  No graph is recorded.
Supervector PoolFramesValue(PoolingKind kind, const Tensor &h,
                            const Tensor &gamma, const Tensor &bottleneck,
                            const AttentionParams *att,
                            std::vector<double> *alpha_out = nullptr);

}  // namespace e2esv

#endif  // E2ESV_POOLING_HPP_
