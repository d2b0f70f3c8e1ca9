// src/phonetic.cc

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

#include "e2esv/phonetic.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace e2esv {

namespace {
constexpr uint32_t kPhoneticFormatVersion = 1;

std::vector<double> GlorotUniform(Rng *rng, std::size_t fan_in,
                                  std::size_t fan_out, std::size_t count) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  for (double &x : v) x = rng->Uniform(-a, a);
  return v;
}
}  // namespace

PhoneticModel PhoneticModel::Init(uint64_t seed) {
  Rng rng(Rng::Derive(seed, 17));
  PhoneticModel m;
  m.store_.Register("l1.W", Tensor::Param({kHidden, kInputDim},
                                          GlorotUniform(&rng, kInputDim,
                                                        kHidden,
                                                        kHidden * kInputDim)));
  m.store_.Register("l1.b",
                    Tensor::Param({kHidden}, std::vector<double>(kHidden, 0.0)));
  m.store_.Register(
      "l2.W", Tensor::Param({kBottleneckDim, kHidden},
                            GlorotUniform(&rng, kHidden, kBottleneckDim,
                                          kBottleneckDim * kHidden)));
  m.store_.Register("l2.b", Tensor::Param({kBottleneckDim},
                                          std::vector<double>(kBottleneckDim,
                                                              0.0)));
  m.store_.Register(
      "out.W", Tensor::Param({kNumClasses, kBottleneckDim},
                             GlorotUniform(&rng, kBottleneckDim, kNumClasses,
                                           kNumClasses * kBottleneckDim)));
  m.store_.Register("out.b", Tensor::Param({kNumClasses},
                                           std::vector<double>(kNumClasses,
                                                               0.0)));
  m.Bind();
  return m;
}

void PhoneticModel::Bind() {
  l1w_ = store_.Get("l1.W");
  l1b_ = store_.Get("l1.b");
  l2w_ = store_.Get("l2.W");
  l2b_ = store_.Get("l2.b");
  ow_ = store_.Get("out.W");
  ob_ = store_.Get("out.b");
  if (l1w_->shape != std::vector<std::size_t>{kHidden, kInputDim} ||
      l2w_->shape != std::vector<std::size_t>{kBottleneckDim, kHidden} ||
      ow_->shape != std::vector<std::size_t>{kNumClasses, kBottleneckDim})
    throw DataError("phone model has unexpected layer shapes");
}

TensorPtr PhoneticModel::Logits(const TensorPtr &frames) const {
  TensorPtr h1 = Sigmoid(Linear(frames, l1w_, l1b_));
  TensorPtr h2 = Sigmoid(Linear(h1, l2w_, l2b_));
  return Linear(h2, ow_, ob_);
}

void PhoneticModel::Extract(const FrameSequence &cmn_feats,
                            FrameSequence *gamma,
                            FrameSequence *bottleneck) const {
  if (cmn_feats.dim != kInputDim)
    throw DataError("phone model input has dim " +
                    std::to_string(cmn_feats.dim) + " (needs " +
                    std::to_string(kInputDim) + ")");
  if (cmn_feats.num_frames == 0)
    throw DataError("phone model input has zero frames");
  NoGradGuard ng;
  TensorPtr x =
      Tensor::Of({cmn_feats.num_frames, kInputDim}, cmn_feats.data);
  TensorPtr h1 = Sigmoid(Linear(x, l1w_, l1b_));
  TensorPtr h2 = Sigmoid(Linear(h1, l2w_, l2b_));
  if (bottleneck != nullptr) {
    bottleneck->utterance_id = cmn_feats.utterance_id;
    bottleneck->num_frames = cmn_feats.num_frames;
    bottleneck->dim = kBottleneckDim;
    bottleneck->data = h2->values;
  }
  if (gamma != nullptr) {
    TensorPtr post = SoftmaxRows(Linear(h2, ow_, ob_));
    gamma->utterance_id = cmn_feats.utterance_id;
    gamma->num_frames = cmn_feats.num_frames;
    gamma->dim = kNumClasses;
    gamma->data = post->values;
  }
}

void PhoneticModel::Save(std::ostream &os) const {
  io::WriteMagic(os, "E2EP");
  io::WriteU32(os, kPhoneticFormatVersion);
  WriteNamedTensors(os, store_.All());
}

PhoneticModel PhoneticModel::Load(std::istream &is) {
  io::ExpectMagic(is, "E2EP", "phone model");
  const uint32_t version = io::ReadU32(is, "phone model version");
  if (version != kPhoneticFormatVersion)
    throw DataError("unsupported phone model version " +
                    std::to_string(version));
  auto tensors = ReadNamedTensors(is);
  static const char *kNames[] = {"l1.W", "l1.b", "l2.W",
                                 "l2.b", "out.W", "out.b"};
  PhoneticModel m;
  for (const char *name : kNames) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw DataError(std::string("phone model missing tensor '") + name +
                      "'");
    it->second->requires_grad = true;
    it->second->EnsureGrad();
    m.store_.Register(name, it->second);
  }
  m.Bind();
  return m;
}

void PhoneticModel::SaveFile(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write phone model " + path.string());
  Save(os);
  if (!os) throw DataError("failed writing phone model " + path.string());
}

PhoneticModel PhoneticModel::LoadFile(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open phone model " + path.string());
  return Load(is);
}

namespace {
// Whole-dataset mean cross entropy without recording a graph.
double DatasetLoss(const PhoneticModel &model,
                   const std::vector<const double *> &rows,
                   const std::vector<int> &labels) {
  NoGradGuard ng;
  const std::size_t chunk = 4096;
  double total = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t n = std::min(chunk, rows.size() - start);
    std::vector<double> x(n * PhoneticModel::kInputDim);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(rows[start + i], rows[start + i] + PhoneticModel::kInputDim,
                x.begin() + i * PhoneticModel::kInputDim);
    std::vector<int> labs(labels.begin() + start, labels.begin() + start + n);
    TensorPtr logits = model.Logits(
        Tensor::Of({n, PhoneticModel::kInputDim}, std::move(x)));
    total += CrossEntropyMean(logits, labs)->Scalar() * static_cast<double>(n);
  }
  return total / static_cast<double>(rows.size());
}
}  // namespace

PhoneticTrainReport TrainPhonetic(
    PhoneticModel *model,
    const std::vector<std::pair<const FrameSequence *, const std::vector<int> *>>
        &utterances,
    int epochs, double learning_rate, std::size_t batch_frames,
    uint64_t seed) {
  if (utterances.empty())
    throw DataError("phone training needs at least one utterance");
  if (epochs < 1 || batch_frames == 0)
    throw UsageError("phone training needs epochs >= 1 and batch size >= 1");

  std::vector<const double *> rows;
  std::vector<int> labels;
  for (const auto &[feats, labs] : utterances) {
    if (feats->dim != PhoneticModel::kInputDim)
      throw DataError("phone training features have dim " +
                      std::to_string(feats->dim));
    if (labs->size() != feats->num_frames)
      throw DataError("utterance '" + feats->utterance_id + "' has " +
                      std::to_string(labs->size()) + " labels for " +
                      std::to_string(feats->num_frames) + " frames");
    for (std::size_t t = 0; t < feats->num_frames; ++t) {
      rows.push_back(feats->Row(t));
      labels.push_back((*labs)[t]);
    }
  }
  for (int lab : labels)
    if (lab < 0 || lab >= static_cast<int>(PhoneticModel::kNumClasses))
      throw DataError("phone label " + std::to_string(lab) + " outside [0, " +
                      std::to_string(PhoneticModel::kNumClasses) + ")");

  PhoneticTrainReport report;
  report.num_frames = rows.size();
  report.epochs = epochs;
  report.initial_loss = DatasetLoss(*model, rows, labels);

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(Rng::Derive(seed, 1000 + static_cast<uint64_t>(epoch)));
    rng.Shuffle(&order);
    for (std::size_t start = 0; start < order.size(); start += batch_frames) {
      const std::size_t n = std::min(batch_frames, order.size() - start);
      std::vector<double> x(n * PhoneticModel::kInputDim);
      std::vector<int> labs(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[start + i];
        std::copy(rows[idx], rows[idx] + PhoneticModel::kInputDim,
                  x.begin() + i * PhoneticModel::kInputDim);
        labs[i] = labels[idx];
      }
      model->Params().ZeroGrad();
      TensorPtr logits = model->Logits(
          Tensor::Of({n, PhoneticModel::kInputDim}, std::move(x)));
      TensorPtr loss = CrossEntropyMean(logits, labs);
      if (!std::isfinite(loss->Scalar()))
        throw NumericError("phone training loss became non-finite at epoch " +
                           std::to_string(epoch));
      Backward(loss);
      model->Params().SgdStep(learning_rate);
    }
  }
  report.final_loss = DatasetLoss(*model, rows, labels);
  return report;
}

}  // namespace e2esv
