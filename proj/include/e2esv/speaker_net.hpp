// include/e2esv/speaker_net.hpp

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

#ifndef E2ESV_SPEAKER_NET_HPP_
#define E2ESV_SPEAKER_NET_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "e2esv/ops.hpp"

namespace e2esv {

enum class SpeakerNetKind { kCnn, kDnn };
std::string SpeakerNetKindName(SpeakerNetKind kind);
SpeakerNetKind ParseSpeakerNetKind(const std::string &name);  // UsageError

// Frame-level speaker feature extractor.  Input is a batch of context
// windows [T x 3 x 31 x 12]; output is [T x 64].
//
// The canonical architecture is a small VGG-style CNN:
//   conv 3->32, bn, relu
//   conv 32->32, bn, relu, maxpool        -> [32 x 16 x 6]
//   conv 32->64, bn, relu
//   conv 64->64, bn, relu, maxpool        -> [64 x 8 x 3]
//   flatten, linear 1536 -> 64
// The ablation variant is a plain DNN: flatten, linear 1116 -> 256, relu,
// linear 256 -> 64.
class SpeakerNet {
 public:
  static constexpr std::size_t kFrameFeatureDim = 64;

  struct Layer {
    enum class Kind { kConv, kBatchNorm, kRelu, kMaxPool, kFlatten, kLinear };
    Kind kind;
    TensorPtr a, b;  // conv kernels; bn scale/shift; linear W/b
    std::shared_ptr<BatchNormState> bn;
  };

  static SpeakerNet InitCnn(uint64_t seed);
  static SpeakerNet InitDnn(uint64_t seed);
  static SpeakerNet Init(SpeakerNetKind kind, uint64_t seed);

  SpeakerNetKind kind() const { return kind_; }
  const std::vector<Layer> &layers() const { return layers_; }

  // windows -> [T x 64] frame features.  In the train modes each batch-norm
  // layer normalizes with this batch's statistics; stats_out (if given)
  // receives those statistics per bn layer, in network order, so the caller
  // can apply running updates later via ApplyBnUpdates.
  TensorPtr Forward(const TensorPtr &windows, BnMode mode,
                    std::vector<BnBatchStats> *stats_out = nullptr) const;

  void ApplyBnUpdates(const std::vector<BnBatchStats> &stats);

  // Registers the trainable tensors (not the bn running stats) under
  // prefix + name, e.g. "net.conv1.k".
  void RegisterParams(ParamStore *store, const std::string &prefix) const;
  std::vector<TensorPtr> TrainableParams() const;

  // Architecture descriptor (key order fixed) + tensors incl. bn running
  // statistics.  Magic "E2EC".
  void Save(std::ostream &os) const;
  static SpeakerNet Load(std::istream &is);
  void SaveFile(const std::filesystem::path &path) const;
  static SpeakerNet LoadFile(const std::filesystem::path &path);
  std::string DescriptorJson() const;

 private:
  SpeakerNetKind kind_ = SpeakerNetKind::kCnn;
  std::vector<Layer> layers_;
};

}  // namespace e2esv

#endif  // E2ESV_SPEAKER_NET_HPP_
