// src/speaker_net.cc

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

#include "e2esv/speaker_net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "e2esv/features.hpp"

namespace e2esv {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {
constexpr uint32_t kSpeakerNetFormatVersion = 1;

std::vector<double> GlorotUniform(Rng *rng, std::size_t fan_in,
                                  std::size_t fan_out, std::size_t count) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  for (double &x : v) x = rng->Uniform(-a, a);
  return v;
}

SpeakerNet::Layer MakeConv(Rng *rng, std::size_t cin, std::size_t cout) {
  SpeakerNet::Layer l;
  l.kind = SpeakerNet::Layer::Kind::kConv;
  l.a = Tensor::Param({cout, cin, 3, 3},
                      GlorotUniform(rng, cin * 9, cout * 9, cout * cin * 9));
  return l;
}

SpeakerNet::Layer MakeBn(std::size_t channels) {
  SpeakerNet::Layer l;
  l.kind = SpeakerNet::Layer::Kind::kBatchNorm;
  l.a = Tensor::Param({channels}, std::vector<double>(channels, 1.0));
  l.b = Tensor::Param({channels}, std::vector<double>(channels, 0.0));
  l.bn = std::make_shared<BatchNormState>(channels);
  // A freshly initialized net is usable for inference right away (the unit
  // running stats make inference-mode bn the identity up to scale/shift);
  // needed so the impostor pool can be built before the first update.
  l.bn->initialized = true;
  return l;
}

SpeakerNet::Layer MakePlain(SpeakerNet::Layer::Kind kind) {
  SpeakerNet::Layer l;
  l.kind = kind;
  return l;
}

SpeakerNet::Layer MakeLinear(Rng *rng, std::size_t in, std::size_t out) {
  SpeakerNet::Layer l;
  l.kind = SpeakerNet::Layer::Kind::kLinear;
  l.a = Tensor::Param({out, in}, GlorotUniform(rng, in, out, out * in));
  l.b = Tensor::Param({out}, std::vector<double>(out, 0.0));
  return l;
}

// Positional tensor names: conv1.k, bn1.scale/shift, fc1.W/b, ...
struct LayerNames {
  std::string base;  // "conv1", "bn2", "fc1", or "" for parameterless layers
};

std::vector<LayerNames> NameLayers(const std::vector<SpeakerNet::Layer> &ls) {
  std::vector<LayerNames> names(ls.size());
  int conv = 0, bn = 0, fc = 0;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    switch (ls[i].kind) {
      case SpeakerNet::Layer::Kind::kConv:
        names[i].base = "conv" + std::to_string(++conv);
        break;
      case SpeakerNet::Layer::Kind::kBatchNorm:
        names[i].base = "bn" + std::to_string(++bn);
        break;
      case SpeakerNet::Layer::Kind::kLinear:
        names[i].base = "fc" + std::to_string(++fc);
        break;
      default:
        break;
    }
  }
  return names;
}
}  // namespace

std::string SpeakerNetKindName(SpeakerNetKind kind) {
  return kind == SpeakerNetKind::kCnn ? "cnn" : "dnn";
}

SpeakerNetKind ParseSpeakerNetKind(const std::string &name) {
  if (name == "cnn") return SpeakerNetKind::kCnn;
  if (name == "dnn") return SpeakerNetKind::kDnn;
  throw UsageError("unknown speaker net kind '" + name +
                   "' (expected cnn or dnn)");
}

SpeakerNet SpeakerNet::InitCnn(uint64_t seed) {
  Rng rng(Rng::Derive(seed, 29));
  SpeakerNet net;
  net.kind_ = SpeakerNetKind::kCnn;
  auto relu = [] { return MakePlain(Layer::Kind::kRelu); };
  net.layers_.push_back(MakeConv(&rng, 3, 32));
  net.layers_.push_back(MakeBn(32));
  net.layers_.push_back(relu());
  net.layers_.push_back(MakeConv(&rng, 32, 32));
  net.layers_.push_back(MakeBn(32));
  net.layers_.push_back(relu());
  net.layers_.push_back(MakePlain(Layer::Kind::kMaxPool));
  net.layers_.push_back(MakeConv(&rng, 32, 64));
  net.layers_.push_back(MakeBn(64));
  net.layers_.push_back(relu());
  net.layers_.push_back(MakeConv(&rng, 64, 64));
  net.layers_.push_back(MakeBn(64));
  net.layers_.push_back(relu());
  net.layers_.push_back(MakePlain(Layer::Kind::kMaxPool));
  net.layers_.push_back(MakePlain(Layer::Kind::kFlatten));
  net.layers_.push_back(MakeLinear(&rng, 64 * 8 * 3, kFrameFeatureDim));
  return net;
}

SpeakerNet SpeakerNet::InitDnn(uint64_t seed) {
  Rng rng(Rng::Derive(seed, 31));
  SpeakerNet net;
  net.kind_ = SpeakerNetKind::kDnn;
  net.layers_.push_back(MakePlain(Layer::Kind::kFlatten));
  net.layers_.push_back(
      MakeLinear(&rng, ContextWindowBatch::kWindowSize, 256));
  net.layers_.push_back(MakePlain(Layer::Kind::kRelu));
  net.layers_.push_back(MakeLinear(&rng, 256, kFrameFeatureDim));
  return net;
}

SpeakerNet SpeakerNet::Init(SpeakerNetKind kind, uint64_t seed) {
  return kind == SpeakerNetKind::kCnn ? InitCnn(seed) : InitDnn(seed);
}

TensorPtr SpeakerNet::Forward(const TensorPtr &windows, BnMode mode,
                              std::vector<BnBatchStats> *stats_out) const {
  if (windows->Rank() != 4 ||
      windows->shape[1] != ContextWindowBatch::kChannels ||
      windows->shape[2] != ContextWindowBatch::kContext ||
      windows->shape[3] != ContextWindowBatch::kFreq)
    throw ShapeError("speaker net input must be [T x 3 x 31 x 12], got " +
                     ShapeString(windows->shape));
  if (stats_out != nullptr) stats_out->clear();
  TensorPtr x = windows;
  for (const Layer &l : layers_) {
    switch (l.kind) {
      case Layer::Kind::kConv:
        x = Conv2d3x3(x, l.a);
        break;
      case Layer::Kind::kBatchNorm: {
        BnBatchStats stats;
        x = BatchNorm(x, l.a, l.b, l.bn.get(), mode,
                      stats_out != nullptr ? &stats : nullptr);
        if (stats_out != nullptr) stats_out->push_back(std::move(stats));
        break;
      }
      case Layer::Kind::kRelu:
        x = Relu(x);
        break;
      case Layer::Kind::kMaxPool:
        x = MaxPool2(x);
        break;
      case Layer::Kind::kFlatten: {
        std::size_t flat = 1;
        for (std::size_t i = 1; i < x->Rank(); ++i) flat *= x->shape[i];
        x = Reshape(x, {x->shape[0], flat});
        break;
      }
      case Layer::Kind::kLinear:
        x = Linear(x, l.a, l.b);
        break;
    }
  }
  return x;
}

void SpeakerNet::ApplyBnUpdates(const std::vector<BnBatchStats> &stats) {
  std::size_t bi = 0;
  for (Layer &l : layers_) {
    if (l.kind != Layer::Kind::kBatchNorm) continue;
    if (bi >= stats.size())
      throw ShapeError("bn update list has " + std::to_string(stats.size()) +
                       " entries for a net with more bn layers");
    ApplyBnUpdate(l.bn.get(), stats[bi++]);
  }
  if (bi != stats.size())
    throw ShapeError("bn update list has " + std::to_string(stats.size()) +
                     " entries for a net with " + std::to_string(bi) +
                     " bn layers");
}

void SpeakerNet::RegisterParams(ParamStore *store,
                                const std::string &prefix) const {
  const auto names = NameLayers(layers_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer &l = layers_[i];
    switch (l.kind) {
      case Layer::Kind::kConv:
        store->Register(prefix + names[i].base + ".k", l.a);
        break;
      case Layer::Kind::kBatchNorm:
        store->Register(prefix + names[i].base + ".scale", l.a);
        store->Register(prefix + names[i].base + ".shift", l.b);
        break;
      case Layer::Kind::kLinear:
        store->Register(prefix + names[i].base + ".W", l.a);
        store->Register(prefix + names[i].base + ".b", l.b);
        break;
      default:
        break;
    }
  }
}

std::vector<TensorPtr> SpeakerNet::TrainableParams() const {
  std::vector<TensorPtr> out;
  for (const Layer &l : layers_) {
    if (l.a) out.push_back(l.a);
    if (l.b) out.push_back(l.b);
  }
  return out;
}

std::string SpeakerNet::DescriptorJson() const {
  ordered_json desc;
  desc["kind"] = SpeakerNetKindName(kind_);
  desc["input"] = {ContextWindowBatch::kChannels, ContextWindowBatch::kContext,
                   ContextWindowBatch::kFreq};
  ordered_json layers = ordered_json::array();
  for (const Layer &l : layers_) {
    ordered_json e;
    switch (l.kind) {
      case Layer::Kind::kConv:
        e["type"] = "conv";
        e["in"] = l.a->shape[1];
        e["out"] = l.a->shape[0];
        break;
      case Layer::Kind::kBatchNorm:
        e["type"] = "bn";
        e["channels"] = l.bn->channels;
        e["initialized"] = l.bn->initialized;
        break;
      case Layer::Kind::kRelu:
        e["type"] = "relu";
        break;
      case Layer::Kind::kMaxPool:
        e["type"] = "maxpool";
        break;
      case Layer::Kind::kFlatten:
        e["type"] = "flatten";
        break;
      case Layer::Kind::kLinear:
        e["type"] = "linear";
        e["in"] = l.a->shape[1];
        e["out"] = l.a->shape[0];
        break;
    }
    layers.push_back(e);
  }
  desc["layers"] = layers;
  return desc.dump();
}

void SpeakerNet::Save(std::ostream &os) const {
  io::WriteMagic(os, "E2EC");
  io::WriteU32(os, kSpeakerNetFormatVersion);
  io::WriteString(os, DescriptorJson());
  std::map<std::string, TensorPtr> tensors;
  const auto names = NameLayers(layers_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer &l = layers_[i];
    switch (l.kind) {
      case Layer::Kind::kConv:
        tensors[names[i].base + ".k"] = l.a;
        break;
      case Layer::Kind::kBatchNorm:
        tensors[names[i].base + ".scale"] = l.a;
        tensors[names[i].base + ".shift"] = l.b;
        tensors[names[i].base + ".running_mean"] =
            Tensor::Of({l.bn->channels}, l.bn->running_mean);
        tensors[names[i].base + ".running_var"] =
            Tensor::Of({l.bn->channels}, l.bn->running_var);
        break;
      case Layer::Kind::kLinear:
        tensors[names[i].base + ".W"] = l.a;
        tensors[names[i].base + ".b"] = l.b;
        break;
      default:
        break;
    }
  }
  WriteNamedTensors(os, tensors);
}

SpeakerNet SpeakerNet::Load(std::istream &is) {
  io::ExpectMagic(is, "E2EC", "speaker net");
  const uint32_t version = io::ReadU32(is, "speaker net version");
  if (version != kSpeakerNetFormatVersion)
    throw DataError("unsupported speaker net version " +
                    std::to_string(version));
  const std::string desc_text = io::ReadString(is, "speaker net descriptor");
  auto tensors = ReadNamedTensors(is);

  json desc;
  try {
    desc = json::parse(desc_text);
  } catch (const json::exception &e) {
    throw DataError(std::string("bad speaker net descriptor: ") + e.what());
  }

  auto take = [&tensors](const std::string &name,
                         std::vector<std::size_t> shape, bool trainable) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw DataError("speaker net missing tensor '" + name + "'");
    if (it->second->shape != shape)
      throw DataError("speaker net tensor '" + name + "' has shape " +
                      ShapeString(it->second->shape) + ", expected " +
                      ShapeString(shape));
    if (trainable) {
      it->second->requires_grad = true;
      it->second->EnsureGrad();
    }
    return it->second;
  };

  SpeakerNet net;
  try {
    net.kind_ = ParseSpeakerNetKind(desc.at("kind").get<std::string>());
  } catch (const UsageError &e) {
    throw DataError(e.what());  // a bad file is a data problem
  }
  int conv = 0, bn = 0, fc = 0;
  for (const auto &e : desc.at("layers")) {
    const std::string type = e.at("type").get<std::string>();
    Layer l;
    if (type == "conv") {
      l.kind = Layer::Kind::kConv;
      const std::size_t cin = e.at("in").get<std::size_t>();
      const std::size_t cout = e.at("out").get<std::size_t>();
      const std::string base = "conv" + std::to_string(++conv);
      l.a = take(base + ".k", {cout, cin, 3, 3}, true);
    } else if (type == "bn") {
      l.kind = Layer::Kind::kBatchNorm;
      const std::size_t c = e.at("channels").get<std::size_t>();
      const std::string base = "bn" + std::to_string(++bn);
      l.a = take(base + ".scale", {c}, true);
      l.b = take(base + ".shift", {c}, true);
      l.bn = std::make_shared<BatchNormState>(c);
      l.bn->running_mean = take(base + ".running_mean", {c}, false)->values;
      l.bn->running_var = take(base + ".running_var", {c}, false)->values;
      l.bn->initialized = e.at("initialized").get<bool>();
    } else if (type == "relu") {
      l.kind = Layer::Kind::kRelu;
    } else if (type == "maxpool") {
      l.kind = Layer::Kind::kMaxPool;
    } else if (type == "flatten") {
      l.kind = Layer::Kind::kFlatten;
    } else if (type == "linear") {
      l.kind = Layer::Kind::kLinear;
      const std::size_t in = e.at("in").get<std::size_t>();
      const std::size_t out = e.at("out").get<std::size_t>();
      const std::string base = "fc" + std::to_string(++fc);
      l.a = take(base + ".W", {out, in}, true);
      l.b = take(base + ".b", {out}, true);
    } else {
      throw DataError("speaker net descriptor has unknown layer type '" +
                      type + "'");
    }
    net.layers_.push_back(std::move(l));
  }
  return net;
}

void SpeakerNet::SaveFile(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write speaker net " + path.string());
  Save(os);
  if (!os) throw DataError("failed writing speaker net " + path.string());
}

SpeakerNet SpeakerNet::LoadFile(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open speaker net " + path.string());
  return Load(is);
}

}  // namespace e2esv
