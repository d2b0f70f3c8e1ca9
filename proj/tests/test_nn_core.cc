// tests/test_nn_core.cc

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
#include <functional>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "e2esv/common.hpp"
#include "e2esv/gradcheck.hpp"
#include "e2esv/ops.hpp"

using namespace e2esv;

namespace {

TensorPtr RandomParam(std::vector<std::size_t> shape, Rng *rng,
                      double scale = 1.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double &x : v) x = scale * rng->Normal();
  return Tensor::Param(std::move(shape), std::move(v));
}

// Contracts a tensor to a scalar with weights fixed at construction, so a
// loss built around it stays the same function across repeated calls (which
// finite differencing requires).
struct Projector {
  std::vector<double> w;
  Projector(std::size_t n, Rng *rng) : w(n) {
    for (double &v : w) v = rng->Uniform(0.5, 1.5);
  }
  TensorPtr operator()(const TensorPtr &x) const {
    TensorPtr m = Reshape(x, {1, w.size()});
    return MatVec(m, Tensor::Of({w.size()}, w));
  }
};

// Runs the finite-difference check of proj(op()) against the given params.
void CheckOpGradients(const char *what, const std::function<TensorPtr()> &op,
                      const std::vector<TensorPtr> &params, Rng *rng,
                      double tol = 1e-6, GradCheckOptions opts = {}) {
  const Projector proj(op()->Size(), rng);
  const GradCheckResult r =
      CheckGradients([&] { return proj(op()); }, params, opts);
  INFO("op: ", what, ", worst component: ", r.worst);
  CHECK(r.components_checked > 0);
  CHECK(r.max_rel_err < tol);
}

void ExpectLowError(const GradCheckResult &r, double tol = 1e-6) {
  INFO("worst component: ", r.worst);
  CHECK(r.components_checked > 0);
  CHECK(r.max_rel_err < tol);
}

}  // namespace

TEST_CASE("finite differences confirm the elementwise op gradients") {
  Rng rng(201);
  for (int c = 0; c < 25; ++c) {
    const std::size_t n = static_cast<std::size_t>(rng.UniformInt(1, 12));
    TensorPtr a = RandomParam({n}, &rng);
    TensorPtr b = RandomParam({n}, &rng);
    // Keep relu inputs away from the kink.
    for (double &v : a->values)
      if (std::abs(v) < 0.1) v += (v >= 0 ? 0.2 : -0.2);

    Rng proj(202);
    CheckOpGradients("add", [&] { return Add(a, b); }, {a, b}, &proj);
    CheckOpGradients("scale", [&] { return Scale(a, -1.7); }, {a}, &proj);
    CheckOpGradients("relu", [&] { return Relu(a); }, {a}, &proj);
    CheckOpGradients("sigmoid", [&] { return Sigmoid(a); }, {a}, &proj);
    CheckOpGradients("tanh", [&] { return Tanh(a); }, {a}, &proj);
    CheckOpGradients("softmax", [&] { return SoftmaxVec(a); }, {a}, &proj);
  }
}

TEST_CASE("finite differences confirm the matrix op gradients") {
  Rng rng(203);
  for (int c = 0; c < 20; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(1, 5));
    const std::size_t in = static_cast<std::size_t>(rng.UniformInt(1, 7));
    const std::size_t out = static_cast<std::size_t>(rng.UniformInt(1, 6));
    TensorPtr x = RandomParam({batch, in}, &rng);
    TensorPtr w = RandomParam({out, in}, &rng);
    TensorPtr b = RandomParam({out}, &rng);
    Rng proj(204);
    CheckOpGradients("linear", [&] { return Linear(x, w, b); }, {x, w, b},
                     &proj);
    CheckOpGradients("row softmax",
                     [&] { return SoftmaxRows(Linear(x, w, b)); }, {x, w, b},
                     &proj);

    TensorPtr m = RandomParam({batch, in}, &rng);
    TensorPtr v = RandomParam({in}, &rng);
    CheckOpGradients("matvec", [&] { return MatVec(m, v); }, {m, v}, &proj);
  }
}

TEST_CASE("linear forward matches the naive affine map") {
  Rng rng(205);
  for (int c = 0; c < 100; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(1, 6));
    const std::size_t in = static_cast<std::size_t>(rng.UniformInt(1, 9));
    const std::size_t out = static_cast<std::size_t>(rng.UniformInt(1, 8));
    TensorPtr x = RandomParam({batch, in}, &rng);
    TensorPtr w = RandomParam({out, in}, &rng);
    TensorPtr b = RandomParam({out}, &rng);
    TensorPtr y = Linear(x, w, b);
    REQUIRE(y->shape == std::vector<std::size_t>({batch, out}));
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        double s = b->values[o];
        for (std::size_t j = 0; j < in; ++j)
          s += x->values[i * in + j] * w->values[o * in + j];
        CHECK(y->values[i * out + o] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv2d matches a naive padded convolution and its gradients") {
  Rng rng(206);
  for (int c = 0; c < 10; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t cin = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t cout = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t h = static_cast<std::size_t>(rng.UniformInt(2, 6));
    const std::size_t w = static_cast<std::size_t>(rng.UniformInt(2, 6));
    TensorPtr x = RandomParam({batch, cin, h, w}, &rng);
    TensorPtr k = RandomParam({cout, cin, 3, 3}, &rng);
    TensorPtr y = Conv2d3x3(x, k);
    REQUIRE(y->shape == std::vector<std::size_t>({batch, cout, h, w}));
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < h; ++oy) {
          for (std::size_t ox = 0; ox < w; ++ox) {
            double s = 0.0;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (std::size_t dy = 0; dy < 3; ++dy) {
                for (std::size_t dx = 0; dx < 3; ++dx) {
                  const long sy = static_cast<long>(oy + dy) - 1;
                  const long sx = static_cast<long>(ox + dx) - 1;
                  if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 ||
                      sx >= static_cast<long>(w))
                    continue;
                  s += x->values[((bi * cin + ci) * h +
                                  static_cast<std::size_t>(sy)) *
                                     w +
                                 static_cast<std::size_t>(sx)] *
                       k->values[((co * cin + ci) * 3 + dy) * 3 + dx];
                }
              }
            }
            CHECK(y->values[((bi * cout + co) * h + oy) * w + ox] ==
                  doctest::Approx(s).epsilon(1e-10));
          }
        }
      }
    }
    Rng proj(207);
    CheckOpGradients("conv2d", [&] { return Conv2d3x3(x, k); }, {x, k}, &proj,
                     1e-6, {1e-5, 40, 208});
  }
}

TEST_CASE("max pool gradients match finite differences away from ties") {
  Rng rng(209);
  for (int c = 0; c < 10; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(1, 2));
    const std::size_t ch = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t h = static_cast<std::size_t>(rng.UniformInt(2, 5));
    const std::size_t w = static_cast<std::size_t>(rng.UniformInt(2, 5));
    TensorPtr x = RandomParam({batch, ch, h, w}, &rng, 10.0);
    Rng proj(210);
    CheckOpGradients("maxpool", [&] { return MaxPool2(x); }, {x}, &proj);
  }
}

TEST_CASE("batch norm normalizes with batch statistics in train mode") {
  Rng rng(211);
  const std::size_t batch = 4, c = 3, h = 2, w = 5;
  TensorPtr x = RandomParam({batch, c, h, w}, &rng, 2.0);
  TensorPtr scale = Tensor::Param({c}, {1.5, 0.5, 2.0});
  TensorPtr shift = Tensor::Param({c}, {0.1, -0.3, 0.7});
  BatchNormState state(c);
  BnBatchStats stats;
  TensorPtr y =
      BatchNorm(x, scale, shift, &state, BnMode::kTrainNoUpdate, &stats);

  for (std::size_t ci = 0; ci < c; ++ci) {
    double mean = 0.0, var = 0.0;
    const std::size_t n = batch * h * w;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < h * w; ++i)
        mean += x->values[(b * c + ci) * h * w + i];
    mean /= static_cast<double>(n);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < h * w; ++i) {
        const double d = x->values[(b * c + ci) * h * w + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n);
    CHECK(stats.mean[ci] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(stats.var[ci] == doctest::Approx(var).epsilon(1e-12));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < h * w; ++i) {
        const double want =
            scale->values[ci] *
                (x->values[(b * c + ci) * h * w + i] - mean) /
                std::sqrt(var + state.epsilon) +
            shift->values[ci];
        CHECK(y->values[(b * c + ci) * h * w + i] ==
              doctest::Approx(want).epsilon(1e-10));
      }
  }
  // kTrainNoUpdate leaves the state untouched and uninitialized.
  CHECK(!state.initialized);
  CHECK(state.running_mean[0] == 0.0);

  ApplyBnUpdate(&state, stats);
  CHECK(state.initialized);
  for (std::size_t ci = 0; ci < c; ++ci) {
    CHECK(state.running_mean[ci] ==
          doctest::Approx(0.9 * 0.0 + 0.1 * stats.mean[ci]).epsilon(1e-12));
    CHECK(state.running_var[ci] ==
          doctest::Approx(0.9 * 1.0 + 0.1 * stats.var[ci]).epsilon(1e-12));
  }

  // kInfer then uses the running statistics.
  TensorPtr z = BatchNorm(x, scale, shift, &state, BnMode::kInfer);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < h * w; ++i) {
        const double want =
            scale->values[ci] *
                (x->values[(b * c + ci) * h * w + i] -
                 state.running_mean[ci]) /
                std::sqrt(state.running_var[ci] + state.epsilon) +
            shift->values[ci];
        CHECK(z->values[(b * c + ci) * h * w + i] ==
              doctest::Approx(want).epsilon(1e-10));
      }
}

TEST_CASE("batch norm in infer mode requires initialized statistics") {
  TensorPtr x = Tensor::Of({1, 2, 1, 1}, {1.0, 2.0});
  TensorPtr scale = Tensor::Param({2}, {1.0, 1.0});
  TensorPtr shift = Tensor::Param({2}, {0.0, 0.0});
  BatchNormState state(2);
  CHECK_THROWS_AS(BatchNorm(x, scale, shift, &state, BnMode::kInfer),
                  DataError);
}

TEST_CASE("batch norm gradients match finite differences") {
  Rng rng(212);
  for (int c = 0; c < 8; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(2, 4));
    const std::size_t ch = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t h = static_cast<std::size_t>(rng.UniformInt(1, 3));
    const std::size_t w = static_cast<std::size_t>(rng.UniformInt(1, 4));
    TensorPtr x = RandomParam({batch, ch, h, w}, &rng, 2.0);
    TensorPtr scale = RandomParam({ch}, &rng);
    TensorPtr shift = RandomParam({ch}, &rng);
    for (double &v : scale->values) v = 1.0 + 0.2 * v;
    BatchNormState state(ch);
    Rng proj(213);
    CheckOpGradients(
        "batch norm",
        [&] {
          return BatchNorm(x, scale, shift, &state, BnMode::kTrainNoUpdate);
        },
        {x, scale, shift}, &proj, 1e-5, {1e-5, 30, 214});
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(215);
  for (int c = 0; c < 20; ++c) {
    const std::size_t batch = static_cast<std::size_t>(rng.UniformInt(1, 6));
    const std::size_t classes = static_cast<std::size_t>(rng.UniformInt(2, 7));
    TensorPtr logits = RandomParam({batch, classes}, &rng);
    std::vector<int> labels(batch);
    for (int &l : labels)
      l = static_cast<int>(rng.UniformInt(0, static_cast<int64_t>(classes) - 1));
    ExpectLowError(CheckGradients(
        [&] { return CrossEntropyMean(logits, labels); }, {logits}));

    TensorPtr z = RandomParam({batch}, &rng, 2.0);
    std::vector<double> targets(batch);
    for (double &t : targets) t = (rng.Uniform() < 0.5) ? 0.0 : 1.0;
    ExpectLowError(CheckGradients(
        [&] { return BceWithLogitsMean(z, targets); }, {z}));
  }
}

TEST_CASE("cross entropy of a uniform distribution is log(classes)") {
  TensorPtr logits = Tensor::Param({2, 4}, std::vector<double>(8, 0.0));
  TensorPtr loss = CrossEntropyMean(logits, {0, 3});
  CHECK(loss->Scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("scoring op gradients match finite differences") {
  Rng rng(216);
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = static_cast<std::size_t>(rng.UniformInt(2, 9));
    TensorPtr a = RandomParam({n}, &rng);
    TensorPtr b = RandomParam({n}, &rng);
    TensorPtr w = RandomParam({1}, &rng);
    TensorPtr bias = RandomParam({1}, &rng);
    ExpectLowError(CheckGradients(
        [&] { return AffineScalar(Cosine(a, b), w, bias); }, {a, b, w, bias}));

    // Full miniature scoring graph: average -> cosine -> affine -> bce.
    TensorPtr e1 = RandomParam({n}, &rng);
    TensorPtr e2 = RandomParam({n}, &rng);
    TensorPtr t = RandomParam({n}, &rng);
    ExpectLowError(CheckGradients(
        [&] {
          TensorPtr model = AverageVectors({e1, e2});
          TensorPtr s = Cosine(t, model);
          TensorPtr z = AffineScalar(s, w, bias);
          return BceWithLogitsMean(StackScalars({z}), {1.0});
        },
        {e1, e2, t, w, bias}));
  }
}

TEST_CASE("mean_rows and kron_pool match naive references and gradients") {
  Rng rng(217);
  for (int c = 0; c < 20; ++c) {
    const std::size_t t = static_cast<std::size_t>(rng.UniformInt(1, 6));
    const std::size_t d = static_cast<std::size_t>(rng.UniformInt(1, 5));
    const std::size_t k = static_cast<std::size_t>(rng.UniformInt(1, 4));
    TensorPtr h = RandomParam({t, d}, &rng);
    TensorPtr m = RandomParam({t, d}, &rng);
    TensorPtr mean = MeanRows(m);
    REQUIRE(mean->shape == std::vector<std::size_t>({d}));
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < t; ++i) s += m->values[i * d + j];
      CHECK(mean->values[j] ==
            doctest::Approx(s / static_cast<double>(t)).epsilon(1e-12));
    }

    TensorPtr gamma_rows = RandomParam({t, k}, &rng);
    for (double &v : gamma_rows->values) v = std::abs(v) + 0.1;
    TensorPtr alpha = RandomParam({t}, &rng, 0.3);
    for (double &v : alpha->values) v = std::abs(v) + 0.05;

    TensorPtr f = KronPool(h, *gamma_rows, alpha);
    REQUIRE(f->shape == std::vector<std::size_t>({k * d}));
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < t; ++i)
          s += alpha->values[i] * gamma_rows->values[i * k + kk] *
               h->values[i * d + j];
        CHECK(f->values[kk * d + j] == doctest::Approx(s).epsilon(1e-10));
      }

    Rng proj(218);
    CheckOpGradients("mean rows", [&] { return MeanRows(m); }, {m}, &proj);
    CheckOpGradients("kron pool",
                     [&] { return KronPool(h, *gamma_rows, alpha); },
                     {h, alpha}, &proj);
    CheckOpGradients("kron pool uniform",
                     [&] { return KronPool(h, *gamma_rows, nullptr); }, {h},
                     &proj);
  }
}

TEST_CASE("no_grad_guard suppresses graph recording") {
  TensorPtr a = Tensor::Param({3}, {1.0, 2.0, 3.0});
  TensorPtr b = Tensor::Param({3}, {4.0, 5.0, 6.0});
  CHECK(GradRecordingEnabled());
  {
    NoGradGuard guard;
    CHECK(!GradRecordingEnabled());
    TensorPtr c = Add(a, b);
    CHECK(c->parents.empty());
    CHECK(!c->backward_step);
    CHECK(!c->requires_grad);
  }
  CHECK(GradRecordingEnabled());
  TensorPtr c = Add(a, b);
  CHECK(c->parents.size() == 2);
  CHECK(c->requires_grad);
}

TEST_CASE("backward frees the recorded graph") {
  TensorPtr a = Tensor::Param({2}, {1.0, 2.0});
  TensorPtr s = Cosine(a, Tensor::Of({2}, {0.5, -0.25}));
  REQUIRE(!s->parents.empty());
  Backward(s);
  CHECK(s->parents.empty());
  CHECK(!s->backward_step);
  CHECK(a->grad.size() == 2);
}

TEST_CASE("backward_from reproduces backward of a weighted sum") {
  Rng rng(219);
  for (int c = 0; c < 30; ++c) {
    const std::size_t n = static_cast<std::size_t>(rng.UniformInt(2, 8));
    std::vector<double> vals(n), seed(n);
    for (double &v : vals) v = rng.Normal();
    for (double &v : seed) v = rng.Normal();

    TensorPtr x1 = Tensor::Param({n}, vals);
    TensorPtr y1 = Sigmoid(x1);
    BackwardFrom(y1, seed);

    // Same function contracted with the seed, then plain Backward.
    TensorPtr x2 = Tensor::Param({n}, vals);
    TensorPtr y2 = Sigmoid(x2);
    TensorPtr m = Reshape(y2, {1, n});
    TensorPtr proj = MatVec(m, Tensor::Of({n}, seed));
    Backward(proj);

    REQUIRE(x1->grad.size() == n);
    REQUIRE(x2->grad.size() == n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(x1->grad[i] == doctest::Approx(x2->grad[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradients accumulate across repeated uses of a leaf") {
  TensorPtr a = Tensor::Param({2}, {3.0, -1.0});
  TensorPtr y = Add(a, a);  // dy/da = 2
  TensorPtr m = Reshape(y, {1, 2});
  TensorPtr s = MatVec(m, Tensor::Of({2}, {1.0, 1.0}));
  Backward(s);
  CHECK(a->grad[0] == doctest::Approx(2.0));
  CHECK(a->grad[1] == doctest::Approx(2.0));
}

TEST_CASE("shape mismatches are rejected") {
  TensorPtr a = Tensor::Param({3}, {1.0, 2.0, 3.0});
  TensorPtr b = Tensor::Param({2}, {1.0, 2.0});
  CHECK_THROWS_AS(Add(a, b), ShapeError);
  CHECK_THROWS_AS(Cosine(a, b), ShapeError);
  CHECK_THROWS_AS(Reshape(a, {2, 2}), ShapeError);
  TensorPtr w = Tensor::Param({4, 5}, std::vector<double>(20, 0.1));
  CHECK_THROWS_AS(Linear(a, w, nullptr), ShapeError);
  CHECK_THROWS_AS(Tensor::Of({2, 2}, {1.0}), ShapeError);
}

TEST_CASE("cosine throws on a zero-norm input") {
  TensorPtr a = Tensor::Param({2}, {0.0, 0.0});
  TensorPtr b = Tensor::Param({2}, {1.0, 1.0});
  CHECK_THROWS_AS(Cosine(a, b), NumericError);
}

TEST_CASE("param store applies sgd to every registered tensor") {
  ParamStore store;
  TensorPtr a = store.Register("a", Tensor::Param({2}, {1.0, 2.0}));
  TensorPtr b = store.Register("b", Tensor::Param({1}, {5.0}));
  CHECK_THROWS_AS(store.Register("a", Tensor::Param({1}, {0.0})), DataError);
  CHECK(store.Has("a"));
  CHECK_THROWS_AS(store.Get("missing"), DataError);

  a->EnsureGrad();
  b->EnsureGrad();
  a->grad = {10.0, -20.0};
  b->grad = {4.0};
  store.SgdStep(0.1);
  CHECK(a->values[0] == doctest::Approx(0.0));
  CHECK(a->values[1] == doctest::Approx(4.0));
  CHECK(b->values[0] == doctest::Approx(4.6));
  CHECK(store.StepCount() == 1);
  store.ZeroGrad();
  CHECK(a->grad[0] == 0.0);
}

TEST_CASE("tensor blocks round-trip through the binary format") {
  Rng rng(220);
  for (int c = 0; c < 100; ++c) {
    const std::size_t r = static_cast<std::size_t>(rng.UniformInt(1, 3));
    std::vector<std::size_t> shape(r);
    for (auto &d : shape) d = static_cast<std::size_t>(rng.UniformInt(1, 6));
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> vals(n);
    for (double &v : vals) v = rng.Normal() * std::pow(10.0, rng.UniformInt(-8, 8));
    TensorPtr t = Tensor::Of(shape, vals);
    std::ostringstream os;
    WriteTensorBlock(os, *t);
    std::istringstream is(os.str());
    TensorPtr u = ReadTensorBlock(is);
    CHECK(u->shape == shape);
    CHECK(u->values == vals);  // bit-exact
  }
}

TEST_CASE("named tensor sections round-trip in name order") {
  std::map<std::string, TensorPtr> tensors;
  tensors["zeta"] = Tensor::Of({2}, {1.0, 2.0});
  tensors["alpha"] = Tensor::Of({1}, {-3.5});
  std::ostringstream os;
  WriteNamedTensors(os, tensors);
  std::istringstream is(os.str());
  auto loaded = ReadNamedTensors(is);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded["alpha"]->values == std::vector<double>{-3.5});
  CHECK(loaded["zeta"]->values == std::vector<double>({1.0, 2.0}));
}
