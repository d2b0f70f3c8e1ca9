// src/pooling.cc

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

#include "e2esv/pooling.hpp"

#include "e2esv/phonetic.hpp"
#include "e2esv/speaker_net.hpp"

namespace e2esv {

std::string PoolingKindName(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::kMean: return "mean";
    case PoolingKind::kPosterior: return "posterior";
    case PoolingKind::kAttention: return "attention";
  }
  return "?";
}

PoolingKind ParsePoolingKind(const std::string &name) {
  if (name == "mean") return PoolingKind::kMean;
  if (name == "posterior") return PoolingKind::kPosterior;
  if (name == "attention") return PoolingKind::kAttention;
  throw UsageError("unknown pooling kind '" + name +
                   "' (expected mean, posterior, or attention)");
}

AttentionParams InitAttention() {
  AttentionParams att;
  att.wh = Tensor::Param({SpeakerNet::kFrameFeatureDim},
                         std::vector<double>(SpeakerNet::kFrameFeatureDim,
                                             0.0));
  att.wb = Tensor::Param({PhoneticModel::kBottleneckDim},
                         std::vector<double>(PhoneticModel::kBottleneckDim,
                                             0.0));
  return att;
}

std::size_t SupervectorDim(PoolingKind kind) {
  return kind == PoolingKind::kMean
             ? SpeakerNet::kFrameFeatureDim
             : SpeakerNet::kFrameFeatureDim * PhoneticModel::kNumClasses;
}

PoolResult PoolFrames(PoolingKind kind, const TensorPtr &h,
                      const Tensor &gamma, const Tensor &bottleneck,
                      const AttentionParams *att) {
  if (h->Rank() != 2 || h->shape[1] != SpeakerNet::kFrameFeatureDim)
    throw ShapeError("pooling input must be [T x 64], got " +
                     ShapeString(h->shape));
  PoolResult res;
  switch (kind) {
    case PoolingKind::kMean:
      res.supervector = MeanRows(h);
      break;
    case PoolingKind::kPosterior:
      res.supervector = KronPool(h, gamma, nullptr);
      break;
    case PoolingKind::kAttention: {
      if (att == nullptr || !att->wh || !att->wb)
        throw DataError("attention pooling needs attention parameters");
      if (bottleneck.shape != std::vector<std::size_t>{
              h->shape[0], PhoneticModel::kBottleneckDim})
        throw ShapeError("attention bottleneck shape " +
                         ShapeString(bottleneck.shape) +
                         " does not match features " + ShapeString(h->shape));
      TensorPtr b = Tensor::Of(bottleneck.shape, bottleneck.values);
      TensorPtr e = Tanh(Add(MatVec(h, att->wh), MatVec(b, att->wb)));
      res.alpha = SoftmaxVec(e);
      res.supervector = KronPool(h, gamma, res.alpha);
      break;
    }
  }
  return res;
}

Supervector PoolFramesValue(PoolingKind kind, const Tensor &h,
                            const Tensor &gamma, const Tensor &bottleneck,
                            const AttentionParams *att,
                            std::vector<double> *alpha_out) {
  NoGradGuard ng;
  TensorPtr hn = Tensor::Of(h.shape, h.values);
  PoolResult res = PoolFrames(kind, hn, gamma, bottleneck, att);
  if (alpha_out != nullptr) {
    if (res.alpha)
      *alpha_out = res.alpha->values;
    else
      alpha_out->assign(h.shape[0], 1.0 / static_cast<double>(h.shape[0]));
  }
  Supervector sv;
  sv.kind = kind;
  sv.values = res.supervector->values;
  return sv;
}

}  // namespace e2esv
