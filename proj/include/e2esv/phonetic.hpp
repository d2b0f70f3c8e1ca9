// include/e2esv/phonetic.hpp

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

#ifndef E2ESV_PHONETIC_HPP_
#define E2ESV_PHONETIC_HPP_

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "e2esv/features.hpp"
#include "e2esv/ops.hpp"

namespace e2esv {

// Frame-level phone classifier: 38 -> 128 sigmoid -> 64 sigmoid -> 10
// softmax.  After supervised training it is frozen; the engine consumes its
// softmax posteriors (gamma) and its 64-dim second hidden layer (the
// bottleneck features feeding the attention weights).
class PhoneticModel {
 public:
  static constexpr std::size_t kInputDim = 38;
  static constexpr std::size_t kHidden = 128;
  static constexpr std::size_t kBottleneckDim = 64;
  static constexpr std::size_t kNumClasses = 10;

  // An empty (unusable) model, for containers; real instances come from
  // Init or Load.
  PhoneticModel() = default;

  static PhoneticModel Init(uint64_t seed);

  // Pre-softmax class scores for a [batch x 38] frame matrix (training).
  TensorPtr Logits(const TensorPtr &frames) const;

  // Frozen forward over mean-normalized features: fills gamma [T x 10]
  // (softmax posteriors) and bottleneck [T x 64].  Either output may be
  // null.  Runs without recording a graph.
  void Extract(const FrameSequence &cmn_feats, FrameSequence *gamma,
               FrameSequence *bottleneck) const;

  ParamStore &Params() { return store_; }
  const ParamStore &Params() const { return store_; }

  void Save(std::ostream &os) const;
  static PhoneticModel Load(std::istream &is);
  void SaveFile(const std::filesystem::path &path) const;
  static PhoneticModel LoadFile(const std::filesystem::path &path);

 private:
  void Bind();  // pulls the named tensors out of the store

  ParamStore store_;
  TensorPtr l1w_, l1b_, l2w_, l2b_, ow_, ob_;
};

struct PhoneticTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t num_frames = 0;
  int epochs = 0;
};

// Supervised minibatch SGD on (frame, label) pairs pooled over utterances.
// Features must already be mean-normalized 38-dim rows; labels are one int
// per frame in [0, 10).  Shuffling is driven by seed; the report carries the
// whole-dataset loss before and after training.
PhoneticTrainReport TrainPhonetic(
    PhoneticModel *model,
    const std::vector<std::pair<const FrameSequence *, const std::vector<int> *>>
        &utterances,
    int epochs, double learning_rate, std::size_t batch_frames, uint64_t seed);

}  // namespace e2esv

#endif  // E2ESV_PHONETIC_HPP_
