// tests/test_speaker_net.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "e2esv/common.hpp"
#include "e2esv/kernels.hpp"
#include "e2esv/speaker_net.hpp"

using namespace e2esv;

namespace {

TensorPtr RandomWindows(std::size_t t, Rng *rng) {
  std::vector<double> v(t * 3 * 31 * 12);
  for (double &x : v) x = rng->Normal();
  return Tensor::Of({t, 3, 31, 12}, std::move(v));
}

bool SameValues(const TensorPtr &a, const TensorPtr &b) {
  return a->shape == b->shape && a->values == b->values;
}

// All parameter tensors, then bn running statistics, concatenated; two nets
// are interchangeable iff these match bitwise.
std::vector<double> NetStateVector(const SpeakerNet &net) {
  std::vector<double> out;
  for (const auto &l : net.layers()) {
    if (l.a) out.insert(out.end(), l.a->values.begin(), l.a->values.end());
    if (l.b) out.insert(out.end(), l.b->values.begin(), l.b->values.end());
    if (l.bn) {
      out.insert(out.end(), l.bn->running_mean.begin(),
                 l.bn->running_mean.end());
      out.insert(out.end(), l.bn->running_var.begin(), l.bn->running_var.end());
      out.push_back(l.bn->initialized ? 1.0 : 0.0);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("cnn init is deterministic in the seed") {
  SpeakerNet a = SpeakerNet::InitCnn(7);
  SpeakerNet b = SpeakerNet::InitCnn(7);
  SpeakerNet c = SpeakerNet::InitCnn(8);
  CHECK(NetStateVector(a) == NetStateVector(b));
  CHECK(NetStateVector(a) != NetStateVector(c));
  CHECK(a.kind() == SpeakerNetKind::kCnn);
  CHECK(a.TrainableParams().size() == 14);  // 4 conv + 4 bn pairs + fc W,b

  SpeakerNet d = SpeakerNet::Init(SpeakerNetKind::kDnn, 7);
  CHECK(d.kind() == SpeakerNetKind::kDnn);
  CHECK(d.TrainableParams().size() == 4);
  CHECK_THROWS_AS((void)ParseSpeakerNetKind("resnet"), UsageError);
  CHECK(ParseSpeakerNetKind("cnn") == SpeakerNetKind::kCnn);
  CHECK(SpeakerNetKindName(SpeakerNetKind::kDnn) == "dnn");
}

TEST_CASE("cnn forward maps windows to frame features") {
  Rng rng(11);
  SpeakerNet net = SpeakerNet::InitCnn(1);
  for (std::size_t t : {std::size_t{1}, std::size_t{6}}) {
    TensorPtr out = net.Forward(RandomWindows(t, &rng), BnMode::kTrainNoUpdate);
    REQUIRE(out->shape == std::vector<std::size_t>{t, 64});
    for (double v : out->values) CHECK(std::isfinite(v));
  }
  // The fc layer consumes the documented flattened extent.
  const auto &fc = net.layers().back();
  REQUIRE(fc.kind == SpeakerNet::Layer::Kind::kLinear);
  CHECK(fc.a->shape == std::vector<std::size_t>{64, 64 * 8 * 3});
}

TEST_CASE("dnn forward maps windows to frame features") {
  Rng rng(12);
  SpeakerNet net = SpeakerNet::InitDnn(2);
  TensorPtr out = net.Forward(RandomWindows(4, &rng), BnMode::kTrainNoUpdate);
  REQUIRE(out->shape == std::vector<std::size_t>{4, 64});
  for (double v : out->values) CHECK(std::isfinite(v));
  REQUIRE(net.layers().size() == 4);  // flatten, linear, relu, linear
  CHECK(net.layers()[1].a->shape == std::vector<std::size_t>{256, 3 * 31 * 12});
  CHECK(net.layers()[3].a->shape == std::vector<std::size_t>{64, 256});
}

TEST_CASE("no-update forwards leave state alone; ApplyBnUpdates matches "
          "in-place training") {
  Rng rng(21);
  TensorPtr w1 = RandomWindows(5, &rng);
  TensorPtr w2 = RandomWindows(7, &rng);

  SpeakerNet a = SpeakerNet::InitCnn(9);
  SpeakerNet b = SpeakerNet::InitCnn(9);

  // kTrainNoUpdate must be pure: repeating it changes nothing.
  std::vector<double> before = NetStateVector(b);
  (void)b.Forward(w1, BnMode::kTrainNoUpdate);
  CHECK(NetStateVector(b) == before);

  for (const TensorPtr &w : {w1, w2}) {
    TensorPtr out_a = a.Forward(w, BnMode::kTrain);
    std::vector<BnBatchStats> stats;
    TensorPtr out_b = b.Forward(w, BnMode::kTrainNoUpdate, &stats);
    CHECK(stats.size() == 4);
    b.ApplyBnUpdates(stats);
    CHECK(SameValues(out_a, out_b));
    CHECK(NetStateVector(a) == NetStateVector(b));
  }
  for (const auto &l : a.layers())
    if (l.bn) CHECK(l.bn->initialized);
}

TEST_CASE("a fresh net infers with identity running statistics") {
  Rng rng(31);
  SpeakerNet net = SpeakerNet::InitCnn(3);
  TensorPtr w = RandomWindows(3, &rng);
  // Usable for inference from the start: unit running stats at construction.
  for (const auto &l : net.layers())
    if (l.bn) {
      CHECK(l.bn->initialized);
      for (double m : l.bn->running_mean) CHECK(m == 0.0);
      for (double v : l.bn->running_var) CHECK(v == 1.0);
    }
  (void)net.Forward(w, BnMode::kTrain);
  TensorPtr out = net.Forward(w, BnMode::kInfer);
  CHECK(out->shape == std::vector<std::size_t>{3, 64});
  // Inference is deterministic and independent of batch composition: a
  // single row scores the same alone as inside the batch.
  std::vector<double> row(w->values.begin(), w->values.begin() + 3 * 31 * 12);
  TensorPtr one = net.Forward(Tensor::Of({1, 3, 31, 12}, row), BnMode::kInfer);
  for (std::size_t j = 0; j < 64; ++j) CHECK(one->values[j] == out->values[j]);
}

TEST_CASE("save/load roundtrip is bit-exact and reproduces inference") {
  Rng rng(41);
  for (SpeakerNetKind kind : {SpeakerNetKind::kCnn, SpeakerNetKind::kDnn}) {
    SpeakerNet net = SpeakerNet::Init(kind, 5);
    (void)net.Forward(RandomWindows(6, &rng), BnMode::kTrain);

    std::stringstream ss;
    net.Save(ss);
    SpeakerNet back = SpeakerNet::Load(ss);
    CHECK(back.kind() == net.kind());
    CHECK(NetStateVector(back) == NetStateVector(net));
    CHECK(back.DescriptorJson() == net.DescriptorJson());

    TensorPtr w = RandomWindows(4, &rng);
    CHECK(SameValues(net.Forward(w, BnMode::kInfer),
                     back.Forward(w, BnMode::kInfer)));
  }
  std::stringstream junk("JUNKxxxxxxxxxxxxxxxx");
  CHECK_THROWS_AS((void)SpeakerNet::Load(junk), DataError);
}

TEST_CASE("register params uses positional layer names") {
  SpeakerNet net = SpeakerNet::InitCnn(1);
  ParamStore store;
  net.RegisterParams(&store, "net.");
  CHECK(store.All().size() == 14);
  CHECK(store.Get("net.conv1.k") == net.layers()[0].a);
  CHECK(store.Get("net.bn1.scale") == net.layers()[1].a);
  CHECK(store.Get("net.bn4.shift") != nullptr);
  CHECK(store.Get("net.fc1.W") == net.layers().back().a);
  CHECK_THROWS_AS((void)store.Get("net.conv5.k"), DataError);
}

TEST_CASE("forward is bitwise identical with parallel kernels on and off") {
  Rng rng(51);
  TensorPtr w = RandomWindows(8, &rng);
  for (SpeakerNetKind kind : {SpeakerNetKind::kCnn, SpeakerNetKind::kDnn}) {
    SpeakerNet net = SpeakerNet::Init(kind, 6);
    kernels::SetParallelEnabled(false);
    TensorPtr serial = net.Forward(w, BnMode::kTrainNoUpdate);
    kernels::SetParallelEnabled(true);
    TensorPtr parallel = net.Forward(w, BnMode::kTrainNoUpdate);
    CHECK(SameValues(serial, parallel));
  }
}
