// src/ops.cc

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

#include "e2esv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "e2esv/kernels.hpp"

namespace e2esv {

namespace {
thread_local bool g_recording = true;

bool AnyRequiresGrad(const std::vector<TensorPtr> &parents) {
  for (const auto &p : parents)
    if (p && p->requires_grad) return true;
  return false;
}
}  // namespace

bool GradRecordingEnabled() { return g_recording; }

NoGradGuard::NoGradGuard() : prev_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = prev_; }

TensorPtr MakeNode(std::vector<std::size_t> shape, std::vector<double> values,
                   std::vector<TensorPtr> parents) {
  auto out = Tensor::Of(std::move(shape), std::move(values));
  if (g_recording && AnyRequiresGrad(parents)) {
    out->requires_grad = true;
    // Drop null optional parents (e.g. a linear layer without bias).
    for (auto &p : parents)
      if (p) out->parents.push_back(std::move(p));
  }
  return out;
}

static std::vector<Tensor *> TopoOrder(Tensor *root) {
  std::vector<Tensor *> order;
  std::unordered_set<Tensor *> visited;
  std::vector<std::pair<Tensor *, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto &top = stack.back();
    if (top.second < top.first->parents.size()) {
      Tensor *p = top.first->parents[top.second++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }
  return order;  // post-order: every node appears after its parents
}

void BackwardFrom(const TensorPtr &root, const std::vector<double> &seed) {
  if (!root->requires_grad)
    throw NumericError("backward requested on a tensor with no recorded graph");
  if (seed.size() != root->Size())
    throw ShapeError("backward seed has " + std::to_string(seed.size()) +
                     " values for a root of shape " + ShapeString(root->shape));
  std::vector<Tensor *> order = TopoOrder(root.get());
  for (Tensor *n : order) n->EnsureGrad();
  for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_step) (*it)->backward_step();
  // Release the tape: grads stay (leaves accumulate across calls), edges go.
  for (Tensor *n : order) {
    n->backward_step = nullptr;
    n->parents.clear();
  }
}

void Backward(const TensorPtr &root) {
  if (!root->IsScalar())
    throw ShapeError("Backward() needs a scalar root, got shape " +
                     ShapeString(root->shape));
  BackwardFrom(root, {1.0});
}

// --- elementwise ----------------------------------------------------------

TensorPtr Add(const TensorPtr &a, const TensorPtr &b) {
  if (a->shape != b->shape)
    throw ShapeError("add: shape " + ShapeString(a->shape) +
                     " does not match shape " + ShapeString(b->shape));
  std::vector<double> y(a->Size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = a->values[i] + b->values[i];
  auto out = MakeNode(a->shape, std::move(y), {a, b});
  if (out->requires_grad) {
    Tensor *ar = a.get(), *br = b.get(), *o = out.get();
    out->backward_step = [ar, br, o]() {
      if (ar->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i)
          ar->grad[i] += o->grad[i];
      if (br->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i)
          br->grad[i] += o->grad[i];
    };
  }
  return out;
}

TensorPtr Scale(const TensorPtr &a, double c) {
  std::vector<double> y(a->Size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * a->values[i];
  auto out = MakeNode(a->shape, std::move(y), {a});
  if (out->requires_grad) {
    Tensor *ar = a.get(), *o = out.get();
    out->backward_step = [ar, o, c]() {
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        ar->grad[i] += c * o->grad[i];
    };
  }
  return out;
}

TensorPtr Relu(const TensorPtr &x) {
  std::vector<double> y(x->Size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
  auto out = MakeNode(x->shape, std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o]() {
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        if (xr->values[i] > 0.0) xr->grad[i] += o->grad[i];
    };
  }
  return out;
}

TensorPtr Sigmoid(const TensorPtr &x) {
  std::vector<double> y(x->Size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x->values[i];
    // Branch keeps exp() argument negative: stable at both tails.
    y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  }
  auto out = MakeNode(x->shape, std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o]() {
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        xr->grad[i] += o->grad[i] * o->values[i] * (1.0 - o->values[i]);
    };
  }
  return out;
}

TensorPtr Tanh(const TensorPtr &x) {
  std::vector<double> y(x->Size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x->values[i]);
  auto out = MakeNode(x->shape, std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o]() {
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        xr->grad[i] += o->grad[i] * (1.0 - o->values[i] * o->values[i]);
    };
  }
  return out;
}

namespace {
// Softmax of one row in place (stable via max shift).
void SoftmaxRow(const double *x, double *y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
}

// dL/dx for one softmax row: y .* (dy - <dy, y>).
void SoftmaxRowBackward(const double *y, const double *dy, double *dx,
                        std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += dy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * (dy[i] - dot);
}
}  // namespace

TensorPtr SoftmaxVec(const TensorPtr &x) {
  if (x->Rank() != 1 || x->Size() == 0)
    throw ShapeError("softmax needs a non-empty rank-1 tensor, got " +
                     ShapeString(x->shape));
  std::vector<double> y(x->Size());
  SoftmaxRow(x->values.data(), y.data(), y.size());
  auto out = MakeNode(x->shape, std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o]() {
      SoftmaxRowBackward(o->values.data(), o->grad.data(), xr->grad.data(),
                         o->values.size());
    };
  }
  return out;
}

TensorPtr SoftmaxRows(const TensorPtr &x) {
  if (x->Rank() != 2)
    throw ShapeError("row softmax needs a rank-2 tensor, got " +
                     ShapeString(x->shape));
  const std::size_t rows = x->shape[0], cols = x->shape[1];
  std::vector<double> y(x->Size());
  for (std::size_t r = 0; r < rows; ++r)
    SoftmaxRow(x->values.data() + r * cols, y.data() + r * cols, cols);
  auto out = MakeNode(x->shape, std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o, rows, cols]() {
      for (std::size_t r = 0; r < rows; ++r)
        SoftmaxRowBackward(o->values.data() + r * cols,
                           o->grad.data() + r * cols,
                           xr->grad.data() + r * cols, cols);
    };
  }
  return out;
}

// --- linear algebra -------------------------------------------------------

TensorPtr Linear(const TensorPtr &x, const TensorPtr &w, const TensorPtr &b) {
  if (w->Rank() != 2)
    throw ShapeError("linear: weight must be rank 2, got " +
                     ShapeString(w->shape));
  const std::size_t m = w->shape[0], n = w->shape[1];
  if (x->Rank() != 1 && x->Rank() != 2)
    throw ShapeError("linear: input must be rank 1 or 2, got " +
                     ShapeString(x->shape));
  const std::size_t batch = x->Rank() == 2 ? x->shape[0] : 1;
  if (x->shape.back() != n)
    throw ShapeError("linear: input shape " + ShapeString(x->shape) +
                     " does not match weight shape " + ShapeString(w->shape));
  if (b && (b->Rank() != 1 || b->shape[0] != m))
    throw ShapeError("linear: bias shape " + ShapeString(b->shape) +
                     " does not match weight shape " + ShapeString(w->shape));

  std::vector<double> y(batch * m);
  kernels::GemmNT(batch, m, n, x->values.data(), w->values.data(), y.data(),
                  0.0);
  if (b)
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t j = 0; j < m; ++j) y[r * m + j] += b->values[j];

  std::vector<std::size_t> oshape =
      x->Rank() == 2 ? std::vector<std::size_t>{batch, m}
                     : std::vector<std::size_t>{m};
  auto out = MakeNode(std::move(oshape), std::move(y), {x, w, b});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *wr = w.get(), *br = b ? b.get() : nullptr;
    Tensor *o = out.get();
    out->backward_step = [xr, wr, br, o, batch, m, n]() {
      const double *dy = o->grad.data();
      if (xr->requires_grad)
        kernels::Gemm(batch, n, m, dy, wr->values.data(), xr->grad.data(),
                      1.0);
      if (wr->requires_grad)
        kernels::GemmTN(m, n, batch, dy, xr->values.data(), wr->grad.data(),
                        1.0);
      if (br != nullptr && br->requires_grad)
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t j = 0; j < m; ++j) br->grad[j] += dy[r * m + j];
    };
  }
  return out;
}

TensorPtr MatVec(const TensorPtr &m, const TensorPtr &v) {
  if (m->Rank() != 2 || v->Rank() != 1 || m->shape[1] != v->shape[0])
    throw ShapeError("matvec: matrix shape " + ShapeString(m->shape) +
                     " does not match vector shape " + ShapeString(v->shape));
  const std::size_t rows = m->shape[0], d = m->shape[1];
  std::vector<double> y(rows, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    const double *row = m->values.data() + t * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * v->values[j];
    y[t] = s;
  }
  auto out = MakeNode({rows}, std::move(y), {m, v});
  if (out->requires_grad) {
    Tensor *mr = m.get(), *vr = v.get(), *o = out.get();
    out->backward_step = [mr, vr, o, rows, d]() {
      for (std::size_t t = 0; t < rows; ++t) {
        const double g = o->grad[t];
        if (mr->requires_grad)
          for (std::size_t j = 0; j < d; ++j)
            mr->grad[t * d + j] += g * vr->values[j];
        if (vr->requires_grad)
          for (std::size_t j = 0; j < d; ++j)
            vr->grad[j] += g * mr->values[t * d + j];
      }
    };
  }
  return out;
}

TensorPtr Reshape(const TensorPtr &x, std::vector<std::size_t> shape) {
  std::size_t total = 1;
  for (std::size_t d : shape) total *= d;
  if (total != x->Size())
    throw ShapeError("reshape: cannot view " + ShapeString(x->shape) + " as " +
                     ShapeString(shape));
  auto out = MakeNode(std::move(shape), x->values, {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o]() {
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        xr->grad[i] += o->grad[i];
    };
  }
  return out;
}

// --- convolution ----------------------------------------------------------

TensorPtr Conv2d3x3(const TensorPtr &x, const TensorPtr &k) {
  if (k->Rank() != 4 || k->shape[2] != 3 || k->shape[3] != 3)
    throw ShapeError("conv2d: kernel must be [cout x cin x 3 x 3], got " +
                     ShapeString(k->shape));
  if (x->Rank() != 3 && x->Rank() != 4)
    throw ShapeError("conv2d: input must be rank 3 or 4, got " +
                     ShapeString(x->shape));
  const bool batched = x->Rank() == 4;
  const std::size_t batch = batched ? x->shape[0] : 1;
  const std::size_t cin = x->shape[batched ? 1 : 0];
  const std::size_t h = x->shape[batched ? 2 : 1];
  const std::size_t w = x->shape[batched ? 3 : 2];
  const std::size_t cout = k->shape[0];
  if (k->shape[1] != cin)
    throw ShapeError("conv2d: input channels " + std::to_string(cin) +
                     " do not match kernel channels " +
                     std::to_string(k->shape[1]) + " (input " +
                     ShapeString(x->shape) + ", kernel " +
                     ShapeString(k->shape) + ")");
  const std::size_t hw = h * w;

  std::vector<double> y(batch * cout * hw);
  {
    const double *xv = x->values.data();
    const double *kv = k->values.data();  // [cout x cin*9] row-major view
    double *yv = y.data();
    kernels::ParallelForWithScratch(
        batch, cin * 9 * hw, [&](std::size_t s, double *cols) {
          kernels::Im2ColK3(xv + s * cin * hw, cin, h, w, cols);
          kernels::Gemm(cout, hw, cin * 9, kv, cols, yv + s * cout * hw, 0.0);
        });
  }

  std::vector<std::size_t> oshape =
      batched ? std::vector<std::size_t>{batch, cout, h, w}
              : std::vector<std::size_t>{cout, h, w};
  auto out = MakeNode(std::move(oshape), std::move(y), {x, k});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *kr = k.get(), *o = out.get();
    out->backward_step = [xr, kr, o, batch, cin, cout, h, w, hw]() {
      const double *dy = o->grad.data();
      if (xr->requires_grad) {
        // dX = conv(dY, K flipped and transposed in the channel dims).
        std::vector<double> kflip(cin * cout * 9);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t co = 0; co < cout; ++co)
            for (int e = 0; e < 9; ++e)
              kflip[(ci * cout + co) * 9 + e] =
                  kr->values[(co * cin + ci) * 9 + (8 - e)];
        double *dx = xr->grad.data();
        kernels::ParallelForWithScratch(
            batch, cout * 9 * hw, [&](std::size_t s, double *cols) {
              kernels::Im2ColK3(dy + s * cout * hw, cout, h, w, cols);
              kernels::Gemm(cin, hw, cout * 9, kflip.data(), cols,
                            dx + s * cin * hw, 1.0);
            });
      }
      if (kr->requires_grad) {
        // dK accumulates over samples in a fixed serial order; the GEMM
        // inside still parallelizes over output rows.
        std::vector<double> cols(cin * 9 * hw);
        for (std::size_t s = 0; s < batch; ++s) {
          kernels::Im2ColK3(xr->values.data() + s * cin * hw, cin, h, w,
                            cols.data());
          kernels::GemmNT(cout, cin * 9, hw, dy + s * cout * hw, cols.data(),
                          kr->grad.data(), 1.0);
        }
      }
    };
  }
  return out;
}

TensorPtr MaxPool2(const TensorPtr &x) {
  if (x->Rank() != 3 && x->Rank() != 4)
    throw ShapeError("maxpool: input must be rank 3 or 4, got " +
                     ShapeString(x->shape));
  const bool batched = x->Rank() == 4;
  const std::size_t batch = batched ? x->shape[0] : 1;
  const std::size_t c = x->shape[batched ? 1 : 0];
  const std::size_t h = x->shape[batched ? 2 : 1];
  const std::size_t w = x->shape[batched ? 3 : 2];
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  const std::size_t count = batch * c;

  std::vector<double> y(count * ho * wo);
  auto argmax = std::make_shared<std::vector<int64_t>>(count * ho * wo);
  kernels::MaxPool2Forward(x->values.data(), count, h, w, y.data(),
                           argmax->data());

  std::vector<std::size_t> oshape =
      batched ? std::vector<std::size_t>{batch, c, ho, wo}
              : std::vector<std::size_t>{c, ho, wo};
  auto out = MakeNode(std::move(oshape), std::move(y), {x});
  if (out->requires_grad) {
    Tensor *xr = x.get(), *o = out.get();
    out->backward_step = [xr, o, argmax]() {
      kernels::MaxPool2Backward(o->grad.data(), argmax->data(),
                                o->grad.size(), xr->grad.data());
    };
  }
  return out;
}

// --- batch normalization --------------------------------------------------

TensorPtr BatchNorm(const TensorPtr &x, const TensorPtr &scale,
                    const TensorPtr &shift, BatchNormState *state, BnMode mode,
                    BnBatchStats *stats_out) {
  if (x->Rank() != 4)
    throw ShapeError("batchnorm: input must be [batch x c x h x w], got " +
                     ShapeString(x->shape));
  const std::size_t batch = x->shape[0], c = x->shape[1], h = x->shape[2],
                    w = x->shape[3];
  if (state->channels != c || scale->Size() != c || shift->Size() != c)
    throw ShapeError("batchnorm: input " + ShapeString(x->shape) +
                     " does not match state with " +
                     std::to_string(state->channels) + " channels");
  const std::size_t hw = h * w;
  const std::size_t m = batch * hw;  // elements per channel

  std::vector<double> mean(c), var(c);
  if (mode == BnMode::kInfer) {
    if (!state->initialized)
      throw DataError(
          "uninitialized normalization statistics: batch norm used in "
          "inference mode before any training update");
    mean = state->running_mean;
    var = state->running_var;
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double *plane = x->values.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += plane[i];
      }
      mean[ch] = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double *plane = x->values.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = plane[i] - mean[ch];
          v += d * d;
        }
      }
      var[ch] = v / static_cast<double>(m);
    }
    if (stats_out != nullptr) {
      stats_out->mean = mean;
      stats_out->var = var;
    }
    if (mode == BnMode::kTrain) {
      BnBatchStats stats{mean, var};
      ApplyBnUpdate(state, stats);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(x->Size());
  auto inv_std = std::make_shared<std::vector<double>>(c);
  std::vector<double> y(x->Size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[ch] + state->epsilon);
    (*inv_std)[ch] = inv;
    const double g = scale->values[ch], sh = shift->values[ch];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x->values[off + i] - mean[ch]) * inv;
        (*xhat)[off + i] = xh;
        y[off + i] = g * xh + sh;
      }
    }
  }

  auto out = MakeNode(x->shape, std::move(y), {x, scale, shift});
  if (out->requires_grad) {
    const bool batch_stats = (mode != BnMode::kInfer);
    Tensor *xr = x.get(), *sr = scale.get(), *hr = shift.get(), *o = out.get();
    out->backward_step = [xr, sr, hr, o, xhat, inv_std, batch, c, hw, m,
                          batch_stats]() {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sdy = 0.0, sdyx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sdy += o->grad[off + i];
            sdyx += o->grad[off + i] * (*xhat)[off + i];
          }
        }
        if (sr->requires_grad) sr->grad[ch] += sdyx;
        if (hr->requires_grad) hr->grad[ch] += sdy;
        if (xr->requires_grad) {
          const double g = sr->values[ch] * (*inv_std)[ch];
          if (batch_stats) {
            const double mdy = sdy / static_cast<double>(m);
            const double mdyx = sdyx / static_cast<double>(m);
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t off = (b * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i)
                xr->grad[off + i] +=
                    g * (o->grad[off + i] - mdy - (*xhat)[off + i] * mdyx);
            }
          } else {
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t off = (b * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i)
                xr->grad[off + i] += g * o->grad[off + i];
            }
          }
        }
      }
    };
  }
  return out;
}

void ApplyBnUpdate(BatchNormState *state, const BnBatchStats &stats) {
  if (stats.mean.size() != state->channels ||
      stats.var.size() != state->channels)
    throw ShapeError("batchnorm update: stats for " +
                     std::to_string(stats.mean.size()) +
                     " channels against state with " +
                     std::to_string(state->channels));
  const double mom = state->momentum;
  for (std::size_t ch = 0; ch < state->channels; ++ch) {
    state->running_mean[ch] =
        mom * state->running_mean[ch] + (1.0 - mom) * stats.mean[ch];
    state->running_var[ch] =
        mom * state->running_var[ch] + (1.0 - mom) * stats.var[ch];
  }
  state->initialized = true;
}

// --- losses ---------------------------------------------------------------

TensorPtr CrossEntropyMean(const TensorPtr &logits,
                           const std::vector<int> &labels) {
  if (logits->Rank() != 2)
    throw ShapeError("cross entropy: logits must be rank 2, got " +
                     ShapeString(logits->shape));
  const std::size_t batch = logits->shape[0], classes = logits->shape[1];
  if (labels.size() != batch)
    throw ShapeError("cross entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(batch) + " rows");
  for (int lab : labels)
    if (lab < 0 || static_cast<std::size_t>(lab) >= classes)
      throw DataError("cross entropy: label " + std::to_string(lab) +
                      " outside [0, " + std::to_string(classes) + ")");

  auto probs = std::make_shared<std::vector<double>>(logits->Size());
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double *z = logits->values.data() + r * classes;
    double *p = probs->data() + r * classes;
    SoftmaxRow(z, p, classes);
    // -log p[label], recomputed in shifted form for stability.
    double mx = z[0];
    for (std::size_t i = 1; i < classes; ++i) mx = std::max(mx, z[i]);
    double lse = 0.0;
    for (std::size_t i = 0; i < classes; ++i) lse += std::exp(z[i] - mx);
    loss += std::log(lse) + mx - z[labels[r]];
  }
  loss /= static_cast<double>(batch);

  auto out = MakeNode({1}, {loss}, {logits});
  if (out->requires_grad) {
    Tensor *lr = logits.get(), *o = out.get();
    auto labs = std::make_shared<std::vector<int>>(labels);
    out->backward_step = [lr, o, probs, labs, batch, classes]() {
      const double g = o->grad[0] / static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t i = 0; i < classes; ++i) {
          double d = (*probs)[r * classes + i];
          if (static_cast<std::size_t>((*labs)[r]) == i) d -= 1.0;
          lr->grad[r * classes + i] += g * d;
        }
    };
  }
  return out;
}

TensorPtr BceWithLogitsMean(const TensorPtr &logits,
                            const std::vector<double> &targets) {
  if (logits->Rank() != 1)
    throw ShapeError("bce: logits must be rank 1, got " +
                     ShapeString(logits->shape));
  const std::size_t n = logits->Size();
  if (targets.size() != n)
    throw ShapeError("bce: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n) + " logits");
  if (n == 0) throw DataError("bce over an empty trial set");

  constexpr double kEps = 1e-12;
  auto probs = std::make_shared<std::vector<double>>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits->values[i];
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
    (*probs)[i] = p;
    const double pc = std::min(1.0 - kEps, std::max(kEps, p));
    loss -= targets[i] * std::log(pc) + (1.0 - targets[i]) * std::log(1.0 - pc);
  }
  loss /= static_cast<double>(n);

  auto out = MakeNode({1}, {loss}, {logits});
  if (out->requires_grad) {
    Tensor *lr = logits.get(), *o = out.get();
    auto tgt = std::make_shared<std::vector<double>>(targets);
    out->backward_step = [lr, o, probs, tgt, n]() {
      const double g = o->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        lr->grad[i] += g * ((*probs)[i] - (*tgt)[i]);
    };
  }
  return out;
}

// --- scoring / pooling ----------------------------------------------------

TensorPtr Cosine(const TensorPtr &a, const TensorPtr &b) {
  if (a->Rank() != 1 || b->Rank() != 1 || a->Size() != b->Size())
    throw ShapeError("cosine: shape " + ShapeString(a->shape) +
                     " does not match shape " + ShapeString(b->shape));
  const std::size_t n = a->Size();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a->values[i] * b->values[i];
    na2 += a->values[i] * a->values[i];
    nb2 += b->values[i] * b->values[i];
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw NumericError("cosine of a degenerate (zero norm) vector");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double raw = dot / (na * nb);
  const double value = std::min(1.0, std::max(-1.0, raw));

  auto out = MakeNode({1}, {value}, {a, b});
  if (out->requires_grad) {
    Tensor *ar = a.get(), *br = b.get(), *o = out.get();
    out->backward_step = [ar, br, o, raw, na, nb, n]() {
      // Gradients of the unclamped cosine; the clamp only trims fp overshoot.
      const double g = o->grad[0];
      const double inv = 1.0 / (na * nb);
      for (std::size_t i = 0; i < n; ++i) {
        if (ar->requires_grad)
          ar->grad[i] += g * (br->values[i] * inv -
                              raw * ar->values[i] / (na * na));
        if (br->requires_grad)
          br->grad[i] += g * (ar->values[i] * inv -
                              raw * br->values[i] / (nb * nb));
      }
    };
  }
  return out;
}

TensorPtr AffineScalar(const TensorPtr &s, const TensorPtr &w,
                       const TensorPtr &b) {
  if (!w->IsScalar() || !b->IsScalar())
    throw ShapeError("affine: w and b must be scalars, got " +
                     ShapeString(w->shape) + " and " + ShapeString(b->shape));
  if (s->Rank() != 1)
    throw ShapeError("affine: scores must be rank 1, got " +
                     ShapeString(s->shape));
  const std::size_t n = s->Size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = w->values[0] * s->values[i] + b->values[0];
  auto out = MakeNode({n}, std::move(y), {s, w, b});
  if (out->requires_grad) {
    Tensor *sr = s.get(), *wr = w.get(), *br = b.get(), *o = out.get();
    out->backward_step = [sr, wr, br, o, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = o->grad[i];
        if (sr->requires_grad) sr->grad[i] += g * wr->values[0];
        if (wr->requires_grad) wr->grad[0] += g * sr->values[i];
        if (br->requires_grad) br->grad[0] += g;
      }
    };
  }
  return out;
}

TensorPtr StackScalars(const std::vector<TensorPtr> &scalars) {
  if (scalars.empty()) throw DataError("stack of an empty scalar list");
  std::vector<double> y(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (!scalars[i]->IsScalar())
      throw ShapeError("stack: element " + std::to_string(i) +
                       " has shape " + ShapeString(scalars[i]->shape));
    y[i] = scalars[i]->values[0];
  }
  auto out = MakeNode({scalars.size()}, std::move(y), scalars);
  if (out->requires_grad) {
    std::vector<Tensor *> raw(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) raw[i] = scalars[i].get();
    Tensor *o = out.get();
    out->backward_step = [raw = std::move(raw), o]() {
      for (std::size_t i = 0; i < raw.size(); ++i)
        if (raw[i]->requires_grad) raw[i]->grad[0] += o->grad[i];
    };
  }
  return out;
}

TensorPtr AverageVectors(const std::vector<TensorPtr> &vectors) {
  if (vectors.empty()) throw DataError("average of an empty vector list");
  const std::size_t n = vectors[0]->Size();
  for (const auto &v : vectors)
    if (v->Rank() != 1 || v->Size() != n)
      throw ShapeError("average: mixed shapes " +
                       ShapeString(vectors[0]->shape) + " and " +
                       ShapeString(v->shape));
  const double inv = 1.0 / static_cast<double>(vectors.size());
  std::vector<double> y(n, 0.0);
  for (const auto &v : vectors)
    for (std::size_t i = 0; i < n; ++i) y[i] += v->values[i];
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
  auto out = MakeNode({n}, std::move(y), vectors);
  if (out->requires_grad) {
    std::vector<Tensor *> raw(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) raw[i] = vectors[i].get();
    Tensor *o = out.get();
    out->backward_step = [raw = std::move(raw), o, inv, n]() {
      for (Tensor *v : raw)
        if (v->requires_grad)
          for (std::size_t i = 0; i < n; ++i)
            v->grad[i] += inv * o->grad[i];
    };
  }
  return out;
}

TensorPtr MeanRows(const TensorPtr &m) {
  if (m->Rank() != 2 || m->shape[0] == 0)
    throw ShapeError("mean over rows needs a non-empty rank-2 tensor, got " +
                     ShapeString(m->shape));
  const std::size_t rows = m->shape[0], d = m->shape[1];
  const double inv = 1.0 / static_cast<double>(rows);
  std::vector<double> y(d, 0.0);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t j = 0; j < d; ++j) y[j] += m->values[t * d + j];
  for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
  auto out = MakeNode({d}, std::move(y), {m});
  if (out->requires_grad) {
    Tensor *mr = m.get(), *o = out.get();
    out->backward_step = [mr, o, rows, d, inv]() {
      for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t j = 0; j < d; ++j)
          mr->grad[t * d + j] += inv * o->grad[j];
    };
  }
  return out;
}

TensorPtr KronPool(const TensorPtr &h, const Tensor &gamma,
                   const TensorPtr &alpha) {
  if (h->Rank() != 2)
    throw ShapeError("kron pool: features must be rank 2, got " +
                     ShapeString(h->shape));
  const std::size_t t_frames = h->shape[0], d = h->shape[1];
  if (gamma.Rank() != 2 || gamma.shape[0] != t_frames)
    throw ShapeError("kron pool: posterior shape " + ShapeString(gamma.shape) +
                     " does not match feature shape " + ShapeString(h->shape));
  const std::size_t k = gamma.shape[1];
  if (alpha && (alpha->Rank() != 1 || alpha->shape[0] != t_frames))
    throw ShapeError("kron pool: weight shape " + ShapeString(alpha->shape) +
                     " does not match feature shape " + ShapeString(h->shape));
  if (t_frames == 0) throw DataError("kron pool over zero frames");

  const double uniform = 1.0 / static_cast<double>(t_frames);
  std::vector<double> f(k * d, 0.0);
  for (std::size_t t = 0; t < t_frames; ++t) {
    const double wt = alpha ? alpha->values[t] : uniform;
    const double *hrow = h->values.data() + t * d;
    const double *grow = gamma.values.data() + t * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double coef = wt * grow[kk];
      double *dst = f.data() + kk * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += coef * hrow[j];
    }
  }

  auto out = MakeNode({k * d}, std::move(f), {h, alpha});
  if (out->requires_grad) {
    Tensor *hr = h.get(), *ar = alpha ? alpha.get() : nullptr;
    Tensor *o = out.get();
    auto gam = std::make_shared<std::vector<double>>(gamma.values);
    out->backward_step = [hr, ar, o, gam, t_frames, d, k, uniform]() {
      const double *g = o->grad.data();  // viewed as [k x d]
      for (std::size_t t = 0; t < t_frames; ++t) {
        const double wt = ar ? ar->values[t] : uniform;
        const double *grow = gam->data() + t * k;
        const double *hrow = hr->values.data() + t * d;
        if (hr->requires_grad) {
          double *dh = hr->grad.data() + t * d;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double coef = wt * grow[kk];
            const double *gk = g + kk * d;
            for (std::size_t j = 0; j < d; ++j) dh[j] += coef * gk[j];
          }
        }
        if (ar != nullptr && ar->requires_grad) {
          double s = 0.0;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double *gk = g + kk * d;
            double dotv = 0.0;
            for (std::size_t j = 0; j < d; ++j) dotv += gk[j] * hrow[j];
            s += grow[kk] * dotv;
          }
          ar->grad[t] += s;
        }
      }
    };
  }
  return out;
}

}  // namespace e2esv
