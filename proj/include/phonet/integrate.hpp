// Copyright 2026 The Phonet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Adaptive Dormand-Prince 5(4) integration for complex state vectors.
// Norms are never renormalized; drift is the caller's error diagnostic.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "phonet/errors.hpp"

namespace phonet::dynamics {

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0: span / 1e4
  std::size_t max_steps = 20000000;
};

// Integrates dx/dt = rhs(t, x) from t0 to t1 in place. rhs has signature
// void(double t, const VectorXcd& x, VectorXcd& dxdt).
template <typename Rhs>
inline void integrate_adaptive(Rhs&& rhs, Eigen::VectorXcd& x, double t0, double t1,
                               const IntegratorOptions& opts = {}) {
  const double span = t1 - t0;
  if (span == 0.0) return;
  if (span < 0.0) throw ValidationError("integrate_adaptive: t1 must exceed t0");

  const Eigen::Index n = x.size();
  Eigen::VectorXcd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  Eigen::VectorXcd xt(n), x5(n);

  double t = t0;
  double h = opts.initial_step > 0.0 ? opts.initial_step : span * 1e-4;
  h = std::min(h, span);

  rhs(t, x, k1);  // FSAL

  std::size_t steps = 0;
  while (t < t1) {
    if (++steps > opts.max_steps)
      throw SolverError("integrate_adaptive: exceeded the step budget");
    if (h < span * 1e-14)
      throw SolverError("integrate_adaptive: step size underflow (stiff problem)");
    h = std::min(h, t1 - t);

    xt = x + h * (1.0 / 5.0) * k1;
    rhs(t + h / 5.0, xt, k2);
    xt = x + h * ((3.0 / 40.0) * k1 + (9.0 / 40.0) * k2);
    rhs(t + 3.0 * h / 10.0, xt, k3);
    xt = x + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3);
    rhs(t + 4.0 * h / 5.0, xt, k4);
    xt = x + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 +
                  (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4);
    rhs(t + 8.0 * h / 9.0, xt, k5);
    xt = x + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 + (46732.0 / 5247.0) * k3 +
                  (49.0 / 176.0) * k4 - (5103.0 / 18656.0) * k5);
    rhs(t + h, xt, k6);
    x5 = x + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4 -
                  (2187.0 / 6784.0) * k5 + (11.0 / 84.0) * k6);
    rhs(t + h, x5, k7);

    // Embedded 4th-order error estimate.
    const Eigen::VectorXcd err_vec =
        h * ((35.0 / 384.0 - 5179.0 / 57600.0) * k1 +
             (500.0 / 1113.0 - 7571.0 / 16695.0) * k3 +
             (125.0 / 192.0 - 393.0 / 640.0) * k4 +
             (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5 +
             (11.0 / 84.0 - 187.0 / 2100.0) * k6 - (1.0 / 40.0) * k7);

    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double scale =
          opts.atol + opts.rtol * std::max(std::abs(x(i)), std::abs(x5(i)));
      err = std::max(err, std::abs(err_vec(i)) / scale);
    }

    if (err <= 1.0) {
      t += h;
      x.swap(x5);
      k1.swap(k7);
    }
    const double factor =
        err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
    h *= factor;
  }
}

}  // namespace phonet::dynamics
