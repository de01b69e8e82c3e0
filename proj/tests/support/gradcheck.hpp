// Finite-difference gradient checking helpers (test-only).

// Copyright 2026 The dstkit Authors
//
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

#ifndef DST_TESTS_GRADCHECK_HPP
#define DST_TESTS_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "dst/autodiff.hpp"
#include "dst/core.hpp"

namespace dst::testing {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  int checked = 0;
};

// Central finite differences against analytic gradients stored in each
// param's grad field. `loss_fn` must rebuild the forward graph from the
// current parameter values. Checks up to `per_param` randomly chosen entries
// of every parameter.
inline GradCheckReport gradcheck(const std::function<double()>& loss_fn,
                                 const std::function<void()>& backward_fn,
                                 const std::vector<Param*>& params, Rng& rng, int per_param = 6,
                                 double h_scale = 1e-5) {
  for (Param* p : params) p->zero_grad();
  backward_fn();

  GradCheckReport rep;
  for (Param* p : params) {
    Matrix analytic = p->grad;
    long n = static_cast<long>(p->value.size());
    std::vector<long> picks;
    if (n <= per_param) {
      for (long i = 0; i < n; ++i) picks.push_back(i);
    } else {
      for (int k = 0; k < per_param; ++k) picks.push_back(rng.uniform_int(0, n - 1));
    }
    for (long flat : picks) {
      long r = flat % p->value.rows();
      long c = flat / p->value.rows();
      double saved = p->value(r, c);
      double h = h_scale * std::max(1.0, std::abs(saved));
      p->value(r, c) = saved + h;
      double lp = loss_fn();
      p->value(r, c) = saved - h;
      double lm = loss_fn();
      p->value(r, c) = saved;
      double fd = (lp - lm) / (2.0 * h);
      double an = analytic(r, c);
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = p->name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
      }
    }
  }
  return rep;
}

}  // namespace dst::testing

#endif  // DST_TESTS_GRADCHECK_HPP
