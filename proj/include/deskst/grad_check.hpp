/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <functional>
#include <vector>

#include "deskst/tensor.hpp"

namespace deskst {

/// Compare reverse-mode gradients of a scalar-valued function against central
/// finite differences. Returns the max over all coordinates of requires_grad
/// inputs of |analytic - numeric| / max(1, |analytic|). The function must be
/// deterministic; it is evaluated twice up front and a mismatch (e.g. dropout
/// drawing fresh masks) is a contract error. Instantiate with S = double for
/// 64-bit accumulation.
template <class S>
S grad_check(const std::function<Tensor<S>(const std::vector<Tensor<S>>&)>& f,
             std::vector<Tensor<S>>& inputs, S eps) {
  {
    Tensor<S> p1 = f(inputs);
    Tensor<S> p2 = f(inputs);
    if (p1.numel() != 1)
      throw ContractError("grad_check: f must be scalar-valued, got shape " +
                          shape_str(p1.shape()));
    if (p1.item() != p2.item())
      throw ContractError(
          "grad_check: f is stochastic (two evaluations disagree); disable "
          "dropout or pin its key");
  }

  std::vector<Mat<S>> analytic(inputs.size());
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    for (auto& t : inputs) t.zero_grad();
    Tensor<S> out = f(inputs);
    tape.backward(out);
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      analytic[i] = inputs[i].has_grad()
                        ? inputs[i].grad()
                        : Mat<S>::Zero(inputs[i].rows(), inputs[i].cols());
    }
  }

  S max_err = S(0);
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    Mat<S>& v = inputs[i].m_mut();
    for (Index r = 0; r < v.rows(); ++r) {
      for (Index c = 0; c < v.cols(); ++c) {
        const S orig = v(r, c);
        v(r, c) = orig + eps;
        S up = f(inputs).item();
        v(r, c) = orig - eps;
        S down = f(inputs).item();
        v(r, c) = orig;
        S numeric = (up - down) / (S(2) * eps);
        S a = analytic[i](r, c);
        S err = std::abs(a - numeric) /
                std::max(S(1), std::abs(a));
        if (err > max_err) max_err = err;
      }
    }
  }
  return max_err;
}

}  // namespace deskst
