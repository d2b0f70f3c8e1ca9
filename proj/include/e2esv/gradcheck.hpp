// include/e2esv/gradcheck.hpp

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

#ifndef E2ESV_GRADCHECK_HPP_
#define E2ESV_GRADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "e2esv/tensor.hpp"

namespace e2esv {

struct GradCheckOptions {
  double step = 1e-5;  // central-difference step
  // When > 0, check at most this many components per parameter, chosen
  // deterministically from seed; 0 checks every component.
  std::size_t sample_per_param = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t components_checked = 0;
  std::string worst;  // "param[idx]: analytic=..., fd=..."
};

// Compares reverse-mode gradients of the scalar loss_fn() against central
// finite differences.  loss_fn must rebuild its graph from the current
// parameter values on every call.  The relative error per component is
// |analytic - fd| / max(1e-8, |analytic| + |fd|).
GradCheckResult CheckGradients(const std::function<TensorPtr()> &loss_fn,
                               const std::vector<TensorPtr> &params,
                               const GradCheckOptions &opts = {});

}  // namespace e2esv

#endif  // E2ESV_GRADCHECK_HPP_
