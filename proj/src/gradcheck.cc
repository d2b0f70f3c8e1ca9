// src/gradcheck.cc

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

#include "e2esv/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "e2esv/ops.hpp"

namespace e2esv {

GradCheckResult CheckGradients(const std::function<TensorPtr()> &loss_fn,
                               const std::vector<TensorPtr> &params,
                               const GradCheckOptions &opts) {
  for (const auto &p : params) {
    p->EnsureGrad();
    p->ZeroGrad();
  }
  TensorPtr loss = loss_fn();
  Backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto &p : params) analytic.push_back(p->grad);

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor &p = *params[pi];
    std::vector<std::size_t> indices(p.Size());
    std::iota(indices.begin(), indices.end(), 0);
    if (opts.sample_per_param > 0 && indices.size() > opts.sample_per_param) {
      Rng rng(Rng::Derive(opts.seed, pi));
      rng.Shuffle(&indices);
      indices.resize(opts.sample_per_param);
    }
    for (std::size_t idx : indices) {
      const double saved = p.values[idx];
      double lp, lm;
      {
        NoGradGuard ng;
        p.values[idx] = saved + opts.step;
        lp = loss_fn()->Scalar();
        p.values[idx] = saved - opts.step;
        lm = loss_fn()->Scalar();
      }
      p.values[idx] = saved;
      const double fd = (lp - lm) / (2.0 * opts.step);
      const double an = analytic[pi][idx];
      const double abs_err = std::fabs(an - fd);
      const double rel_err =
          abs_err / std::max(1e-8, std::fabs(an) + std::fabs(fd));
      ++res.components_checked;
      if (abs_err > res.max_abs_err) res.max_abs_err = abs_err;
      if (rel_err > res.max_rel_err) {
        res.max_rel_err = rel_err;
        std::ostringstream os;
        os << "param " << pi << "[" << idx << "]: analytic=" << an
           << " fd=" << fd;
        res.worst = os.str();
      }
    }
  }
  return res;
}

}  // namespace e2esv
