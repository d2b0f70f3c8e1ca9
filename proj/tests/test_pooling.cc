// tests/test_pooling.cc

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
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "e2esv/common.hpp"
#include "e2esv/gradcheck.hpp"
#include "e2esv/pooling.hpp"

using namespace e2esv;

namespace {

constexpr std::size_t kH = 64;   // frame feature dim
constexpr std::size_t kC = 10;   // phone classes

TensorPtr RandomParam(std::vector<std::size_t> shape, Rng *rng,
                      double scale = 1.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double &x : v) x = scale * rng->Normal();
  return Tensor::Param(std::move(shape), std::move(v));
}

// Row-stochastic [t x kC] posteriors, softmax of random logits.
TensorPtr RandomGamma(std::size_t t, Rng *rng) {
  std::vector<double> v(t * kC);
  for (std::size_t r = 0; r < t; ++r) {
    double mx = -1e300;
    for (std::size_t c = 0; c < kC; ++c) {
      v[r * kC + c] = 2.0 * rng->Normal();
      mx = std::max(mx, v[r * kC + c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < kC; ++c) {
      v[r * kC + c] = std::exp(v[r * kC + c] - mx);
      sum += v[r * kC + c];
    }
    for (std::size_t c = 0; c < kC; ++c) v[r * kC + c] /= sum;
  }
  return Tensor::Of({t, kC}, std::move(v));
}

// Naive reference poolers, straight from the definitions.
std::vector<double> NaiveMean(const Tensor &h) {
  const std::size_t t = h.shape[0];
  std::vector<double> f(kH, 0.0);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t j = 0; j < kH; ++j) f[j] += h.values[r * kH + j];
  for (double &x : f) x /= static_cast<double>(t);
  return f;
}

std::vector<double> NaiveWeightedKron(const Tensor &h, const Tensor &gamma,
                                      const std::vector<double> &alpha) {
  const std::size_t t = h.shape[0];
  std::vector<double> f(kC * kH, 0.0);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = 0; c < kC; ++c)
      for (std::size_t j = 0; j < kH; ++j)
        f[c * kH + j] +=
            alpha[r] * gamma.values[r * kC + c] * h.values[r * kH + j];
  return f;
}

std::vector<double> NaiveAlpha(const Tensor &h, const Tensor &b,
                               const AttentionParams &att) {
  const std::size_t t = h.shape[0];
  std::vector<double> e(t);
  for (std::size_t r = 0; r < t; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < kH; ++j) {
      s += att.wh->values[j] * h.values[r * kH + j];
      s += att.wb->values[j] * b.values[r * kH + j];
    }
    e[r] = std::tanh(s);
  }
  double mx = *std::max_element(e.begin(), e.end());
  double sum = 0.0;
  std::vector<double> alpha(t);
  for (std::size_t r = 0; r < t; ++r) {
    alpha[r] = std::exp(e[r] - mx);
    sum += alpha[r];
  }
  for (double &a : alpha) a /= sum;
  return alpha;
}

double MaxAbsDiff(const std::vector<double> &a, const std::vector<double> &b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("kind names roundtrip and dims are fixed") {
  for (PoolingKind k :
       {PoolingKind::kMean, PoolingKind::kPosterior, PoolingKind::kAttention})
    CHECK(ParsePoolingKind(PoolingKindName(k)) == k);
  CHECK_THROWS_AS((void)ParsePoolingKind("max"), UsageError);
  CHECK(SupervectorDim(PoolingKind::kMean) == 64);
  CHECK(SupervectorDim(PoolingKind::kPosterior) == 640);
  CHECK(SupervectorDim(PoolingKind::kAttention) == 640);
}

TEST_CASE("mean and posterior pooling match the naive definitions") {
  Rng rng(101);
  for (int c = 0; c < 100; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 10));
    TensorPtr h = RandomParam({t, kH}, &rng);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng);

    PoolResult mean =
        PoolFrames(PoolingKind::kMean, h, *gamma, *bottle, nullptr);
    REQUIRE(mean.supervector->Size() == 64);
    CHECK(mean.alpha == nullptr);
    CHECK(MaxAbsDiff(mean.supervector->values, NaiveMean(*h)) <= 1e-12);

    PoolResult post =
        PoolFrames(PoolingKind::kPosterior, h, *gamma, *bottle, nullptr);
    REQUIRE(post.supervector->Size() == 640);
    std::vector<double> uniform(t, 1.0 / static_cast<double>(t));
    CHECK(MaxAbsDiff(post.supervector->values,
                     NaiveWeightedKron(*h, *gamma, uniform)) <= 1e-12);
  }
}

TEST_CASE("attention pooling matches the naive definition") {
  Rng rng(102);
  for (int c = 0; c < 100; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 10));
    TensorPtr h = RandomParam({t, kH}, &rng);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng, 0.5);
    AttentionParams att = InitAttention();
    for (double &v : att.wh->values) v = 0.2 * rng.Normal();
    for (double &v : att.wb->values) v = 0.2 * rng.Normal();

    PoolResult got =
        PoolFrames(PoolingKind::kAttention, h, *gamma, *bottle, &att);
    REQUIRE(got.supervector->Size() == 640);
    REQUIRE(got.alpha != nullptr);
    REQUIRE(got.alpha->Size() == t);

    std::vector<double> alpha = NaiveAlpha(*h, *bottle, att);
    CHECK(MaxAbsDiff(got.alpha->values, alpha) <= 1e-12);
    CHECK(MaxAbsDiff(got.supervector->values,
                     NaiveWeightedKron(*h, *gamma, alpha)) <= 1e-12);

    double asum = 0.0;
    for (double a : got.alpha->values) {
      CHECK(a > 0.0);
      asum += a;
    }
    CHECK(asum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("zero-initialized attention equals posterior pooling") {
  Rng rng(103);
  AttentionParams att = InitAttention();
  for (double v : att.wh->values) CHECK(v == 0.0);
  for (double v : att.wb->values) CHECK(v == 0.0);
  for (int c = 0; c < 50; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 12));
    TensorPtr h = RandomParam({t, kH}, &rng);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng);
    PoolResult a =
        PoolFrames(PoolingKind::kAttention, h, *gamma, *bottle, &att);
    PoolResult p =
        PoolFrames(PoolingKind::kPosterior, h, *gamma, *bottle, nullptr);
    CHECK(MaxAbsDiff(a.supervector->values, p.supervector->values) <= 1e-12);
    for (double w : a.alpha->values)
      CHECK(w == doctest::Approx(1.0 / static_cast<double>(t)).epsilon(1e-12));
  }
}

TEST_CASE("graph pooling and value pooling agree") {
  Rng rng(104);
  for (int c = 0; c < 50; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 10));
    TensorPtr h = RandomParam({t, kH}, &rng);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng);
    AttentionParams att = InitAttention();
    for (double &v : att.wh->values) v = 0.3 * rng.Normal();
    for (double &v : att.wb->values) v = 0.3 * rng.Normal();

    for (PoolingKind kind : {PoolingKind::kMean, PoolingKind::kPosterior,
                             PoolingKind::kAttention}) {
      const AttentionParams *ap =
          kind == PoolingKind::kAttention ? &att : nullptr;
      PoolResult graph = PoolFrames(kind, h, *gamma, *bottle, ap);
      std::vector<double> alpha_out;
      Supervector value =
          PoolFramesValue(kind, *h, *gamma, *bottle, ap, &alpha_out);
      CHECK(value.kind == kind);
      CHECK(graph.supervector->values == value.values);
      if (kind == PoolingKind::kAttention)
        CHECK(graph.alpha->values == alpha_out);
    }
  }
}

TEST_CASE("posterior blocks sum to the mean supervector") {
  // Because each gamma row sums to one, summing the 10 blocks of the
  // posterior supervector recovers mean pooling.
  Rng rng(105);
  for (int c = 0; c < 100; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 10));
    TensorPtr h = RandomParam({t, kH}, &rng);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng);
    PoolResult post =
        PoolFrames(PoolingKind::kPosterior, h, *gamma, *bottle, nullptr);
    PoolResult mean =
        PoolFrames(PoolingKind::kMean, h, *gamma, *bottle, nullptr);
    std::vector<double> block_sum(kH, 0.0);
    for (std::size_t cc = 0; cc < kC; ++cc)
      for (std::size_t j = 0; j < kH; ++j)
        block_sum[j] += post.supervector->values[cc * kH + j];
    CHECK(MaxAbsDiff(block_sum, mean.supervector->values) <= 1e-12);
  }
}

TEST_CASE("finite differences confirm the pooling gradients") {
  Rng rng(106);
  for (int c = 0; c < 8; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(2, 6));
    TensorPtr h = RandomParam({t, kH}, &rng, 0.5);
    TensorPtr gamma = RandomGamma(t, &rng);
    TensorPtr bottle = RandomParam({t, kH}, &rng, 0.5);
    AttentionParams att = InitAttention();
    for (double &v : att.wh->values) v = 0.2 * rng.Normal();
    for (double &v : att.wb->values) v = 0.2 * rng.Normal();

    // Project the supervector to a scalar with fixed weights so the loss is
    // the same function on every call.
    std::vector<double> pw(640);
    for (double &v : pw) v = rng.Uniform(0.5, 1.5);
    auto project = [&pw](const TensorPtr &sv) {
      TensorPtr m = Reshape(sv, {1, sv->Size()});
      return MatVec(m, Tensor::Of({sv->Size()},
                                  std::vector<double>(
                                      pw.begin(), pw.begin() + sv->Size())));
    };

    GradCheckOptions opts;
    opts.sample_per_param = 40;
    opts.seed = 1000 + static_cast<uint64_t>(c);
    for (PoolingKind kind : {PoolingKind::kMean, PoolingKind::kPosterior,
                             PoolingKind::kAttention}) {
      const AttentionParams *ap =
          kind == PoolingKind::kAttention ? &att : nullptr;
      std::vector<TensorPtr> params = {h};
      if (ap != nullptr) {
        params.push_back(att.wh);
        params.push_back(att.wb);
      }
      GradCheckResult r = CheckGradients(
          [&] {
            return project(PoolFrames(kind, h, *gamma, *bottle, ap).supervector);
          },
          params, opts);
      INFO("kind: ", PoolingKindName(kind), ", worst: ", r.worst);
      CHECK(r.components_checked > 0);
      CHECK(r.max_rel_err < 1e-5);
    }
  }
}
