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

// Linear Coulomb-chain physics: equilibrium positions, transverse normal
// modes, ion-mode coupling strengths, ion assignment rules, and the
// large-chain scaling estimates built on top of them.
//
// Conventions: frequencies are ordinary Hz everywhere, ions and modes are
// 0-based in code (1-based only in serialized/user-facing form), and mode
// tables are sorted by ascending frequency so the center-of-mass mode is
// always the last entry.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phonet/constants.hpp"
#include "phonet/errors.hpp"

namespace phonet::ionchain {

struct TrapParams {
  int n_ions = 1;
  double nu_com_transverse_hz = 0.0;
  double nu_axial_hz = 0.0;
  // When set, the chain is taken to be exactly equally spaced (scaling-study
  // idealization) and the harmonic equilibrium solve is bypassed.
  std::optional<double> fixed_spacing_m;
  double ion_mass_kg = constants::yb171_mass_kg;
  double raman_wavevector_per_m = constants::raman_355_perp_wavevector;

  void validate() const {
    if (n_ions < 1) throw ValidationError("TrapParams: n_ions must be >= 1");
    if (nu_com_transverse_hz <= 0.0)
      throw ValidationError("TrapParams: nu_com_transverse must be positive");
    if (fixed_spacing_m) {
      if (*fixed_spacing_m <= 0.0)
        throw ValidationError("TrapParams: fixed_spacing must be positive");
    } else if (n_ions > 1) {
      if (nu_axial_hz <= 0.0)
        throw ValidationError("TrapParams: nu_axial must be positive");
      if (nu_com_transverse_hz <= nu_axial_hz)
        throw ValidationError(
            "TrapParams: nu_com_transverse must exceed nu_axial for a stable "
            "linear chain");
    }
    if (ion_mass_kg <= 0.0) throw ValidationError("TrapParams: ion_mass must be positive");
    if (raman_wavevector_per_m <= 0.0)
      throw ValidationError("TrapParams: raman_wavevector must be positive");
  }
};

struct ModeTable {
  Eigen::VectorXd frequencies_hz;  // ascending; last entry is the COM mode
  Eigen::MatrixXd mode_vectors;    // (ion j, mode m), orthonormal columns
  Eigen::MatrixXd lamb_dicke;      // eta_{j,m} = eta_m * b_{j,m}

  int n_ions() const { return static_cast<int>(mode_vectors.rows()); }
  int n_modes() const { return static_cast<int>(mode_vectors.cols()); }
};

struct ConnectivityStats {
  int n_ions = 0;
  double fraction_above_threshold = 0.0;
  double mean_best_product = 0.0;
  double std_best_product = 0.0;
};

enum class SpacingMode { harmonic, equal };

namespace detail {

// Equilibrium of N ions in a harmonic axial well, in the usual dimensionless
// units (length scale l^3 = k_e q^2 / (M w_ax^2)). Damped Newton iteration on
// the force balance; the Jacobian is the axial Hessian, positive definite in
// the neighborhood of the minimum.
inline Eigen::VectorXd equilibrium_dimensionless(int n) {
  if (n == 1) return Eigen::VectorXd::Zero(1);

  // Even spread as initial guess; the ~2.0/N^0.56 law keeps Newton in the
  // basin for all chain lengths used here.
  Eigen::VectorXd u(n);
  const double spread = 2.018 / std::pow(static_cast<double>(n), 0.559);
  for (int i = 0; i < n; ++i) u(i) = (i - 0.5 * (n - 1)) * spread;

  auto force = [n](const Eigen::VectorXd& x) {
    Eigen::VectorXd f = -x;  // trap pulls to the center
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double d = x(i) - x(j);
        f(i) += (d > 0 ? 1.0 : -1.0) / (d * d);
      }
    }
    return f;
  };

  const int max_iter = 200;
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd f = force(u);
    const double res = f.lpNorm<Eigen::Infinity>();
    if (res < 1e-13) {
      // Symmetrize: the exact solution is reflection-antisymmetric.
      Eigen::VectorXd sym(n);
      for (int i = 0; i < n; ++i) sym(i) = 0.5 * (u(i) - u(n - 1 - i));
      return sym;
    }

    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double d3 = std::pow(std::abs(u(i) - u(j)), 3.0);
        jac(i, i) += 2.0 / d3;
        jac(i, j) -= 2.0 / d3;
      }
    }
    Eigen::VectorXd step = jac.ldlt().solve(f);

    // Backtrack if the step reorders ions or grows the residual.
    double alpha = 1.0;
    for (int bt = 0; bt < 40; ++bt) {
      Eigen::VectorXd trial = u + alpha * step;
      bool ordered = true;
      for (int i = 0; i + 1 < n; ++i)
        if (trial(i) >= trial(i + 1)) ordered = false;
      if (ordered && force(trial).lpNorm<Eigen::Infinity>() < res) {
        u = trial;
        break;
      }
      alpha *= 0.5;
      if (bt == 39) u += alpha * step;
    }
  }
  throw SolverError("equilibrium_positions: Newton solve did not converge in 200 iterations");
}

// Dimensionless transverse coupling matrix for given positions: C_ij =
// delta_ij sum_p 1/|u_i-u_p|^3 - (1-delta_ij)/|u_i-u_j|^3. Positive
// semidefinite with the uniform vector in its kernel (the COM mode).
inline Eigen::MatrixXd transverse_coupling(const Eigen::VectorXd& positions) {
  const int n = static_cast<int>(positions.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double inv_d3 = 1.0 / std::pow(std::abs(positions(i) - positions(j)), 3.0);
      c(i, j) = -inv_d3;
      c(i, i) += inv_d3;
    }
  }
  return c;
}

// Deterministic sign fix: the largest-magnitude component (lowest index on
// ties) is made positive.
inline void fix_vector_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best)) + 1e-12) best = i;
  if (v(best) < 0) v = -v;
}

// argmax with a relative tolerance so that exact symmetry ties resolve to the
// lowest index instead of depending on round-off.
inline int argmax_with_ties(const Eigen::VectorXd& values, double rel_tol = 1e-9) {
  const double vmax = values.maxCoeff();
  const double cut = vmax - std::abs(vmax) * rel_tol;
  for (int i = 0; i < values.size(); ++i)
    if (values(i) >= cut) return i;
  return 0;
}

}  // namespace detail

// Axial equilibrium positions in meters, sorted ascending and symmetric about
// the trap center. With fixed_spacing set the equally spaced chain is
// returned directly.
inline std::vector<double> equilibrium_positions(const TrapParams& params) {
  params.validate();
  const int n = params.n_ions;
  std::vector<double> out(n);

  if (params.fixed_spacing_m) {
    const double s = *params.fixed_spacing_m;
    for (int i = 0; i < n; ++i) out[i] = (i - 0.5 * (n - 1)) * s;
    return out;
  }

  const double w_ax = angular(params.nu_axial_hz);
  const double length_scale =
      std::cbrt(constants::coulomb_constant * constants::elementary_charge *
                constants::elementary_charge / (params.ion_mass_kg * w_ax * w_ax));
  Eigen::VectorXd u = detail::equilibrium_dimensionless(n);
  for (int i = 0; i < n; ++i) out[i] = u(i) * length_scale;
  return out;
}

// Transverse normal modes of the chain: frequencies, orthonormal mode
// vectors, and Lamb-Dicke couplings. Throws InstabilityError when the lowest
// mode softens to zero (zig-zag transition).
inline ModeTable transverse_modes(const TrapParams& params,
                                  const std::vector<double>& positions_m) {
  params.validate();
  const int n = params.n_ions;
  if (static_cast<int>(positions_m.size()) != n)
    throw ValidationError("transverse_modes: positions size does not match n_ions");

  const double w_t = angular(params.nu_com_transverse_hz);
  const double coulomb_over_mass = constants::coulomb_constant *
                                   constants::elementary_charge *
                                   constants::elementary_charge / params.ion_mass_kg;

  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(positions_m.data(), n);
  Eigen::MatrixXd k =
      w_t * w_t * Eigen::MatrixXd::Identity(n, n) - coulomb_over_mass * detail::transverse_coupling(z);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  Eigen::VectorXd w2 = es.eigenvalues();  // ascending
  for (int m = 0; m < n; ++m) {
    if (w2(m) <= 0.0)
      throw InstabilityError(
          "transverse_modes: mode " + std::to_string(m + 1) +
              " has non-positive squared frequency (zig-zag instability)",
          m);
  }

  ModeTable table;
  table.frequencies_hz.resize(n);
  table.mode_vectors = es.eigenvectors();
  table.lamb_dicke.resize(n, n);
  for (int m = 0; m < n; ++m) {
    const double w_m = std::sqrt(w2(m));
    table.frequencies_hz(m) = ordinary(w_m);
    detail::fix_vector_sign(table.mode_vectors.col(m));
    const double eta_m = params.raman_wavevector_per_m *
                         std::sqrt(constants::hbar / (2.0 * params.ion_mass_kg * w_m));
    table.lamb_dicke.col(m) = eta_m * table.mode_vectors.col(m);
  }
  return table;
}

inline ModeTable transverse_modes(const TrapParams& params) {
  return transverse_modes(params, equilibrium_positions(params));
}

struct AxialFitResult {
  double nu_axial_hz = 0.0;
  double rms_residual_hz = 0.0;
  Eigen::VectorXd model_frequencies_hz;  // all n modes at the fitted nu_axial
};

// Recover the axial trap frequency from a measured transverse spectrum.
// Accepts either all n frequencies (the max is pinned as the COM) or the n-1
// non-COM frequencies, with the COM taken from params.nu_com_transverse_hz.
// The transverse spectrum obeys nu_m^2 = nu_com^2 - c_m nu_ax^2 with c_m the
// eigenvalues of the dimensionless coupling matrix, so this is a 1-D least
// squares problem solved by golden-section search.
inline AxialFitResult fit_axial_frequency(const std::vector<double>& measured_hz,
                                          TrapParams params) {
  const int n = params.n_ions;
  if (n < 2)
    throw ValidationError("fit_axial_frequency: a single ion carries no axial information");
  const int n_meas = static_cast<int>(measured_hz.size());
  if (n_meas != n && n_meas != n - 1)
    throw ValidationError("fit_axial_frequency: expected n_ions or n_ions-1 frequencies");

  std::vector<double> meas = measured_hz;
  std::sort(meas.begin(), meas.end());

  double nu_com;
  std::vector<double> targets;  // non-COM, ascending
  if (n_meas == n) {
    nu_com = meas.back();
    targets.assign(meas.begin(), meas.end() - 1);
  } else {
    nu_com = params.nu_com_transverse_hz;
    if (nu_com <= meas.back())
      throw ValidationError(
          "fit_axial_frequency: params.nu_com_transverse must exceed all non-COM "
          "frequencies when the COM is not in the measured list");
    targets = meas;
  }
  params.nu_com_transverse_hz = nu_com;

  // Dimensionless eigenvalues c_m, descending so they pair with ascending
  // frequencies. c = (axial hessian spectrum - 1)/2 in these units.
  Eigen::VectorXd u = detail::equilibrium_dimensionless(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::transverse_coupling(u));
  Eigen::VectorXd c = es.eigenvalues().reverse();  // descending, last ~ 0 (COM)

  auto sse = [&](double nu_ax) {
    double s = 0.0;
    for (int m = 0; m < n - 1; ++m) {
      const double f2 = nu_com * nu_com - c(m) * nu_ax * nu_ax;
      const double f = f2 > 0.0 ? std::sqrt(f2) : 0.0;
      const double r = f - targets[static_cast<std::size_t>(m)];
      s += r * r;
    }
    return s;
  };

  // Stability bound gives the bracket.
  const double hi = nu_com / std::sqrt(c(0));
  double a = 1e-6 * hi, b = hi * (1.0 - 1e-9);
  if (!(b > a)) throw SolverError("fit_axial_frequency: no bracketing interval");

  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = sse(x1), f2 = sse(x2);
  for (int it = 0; it < 300 && (b - a) > 1e-12 * hi; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - gr * (b - a); f1 = sse(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + gr * (b - a); f2 = sse(x2);
    }
  }
  const double nu_ax = 0.5 * (a + b);

  AxialFitResult result;
  result.nu_axial_hz = nu_ax;
  result.rms_residual_hz = std::sqrt(sse(nu_ax) / (n - 1));
  result.model_frequencies_hz.resize(n);
  for (int m = 0; m < n - 1; ++m)
    result.model_frequencies_hz(m) = std::sqrt(nu_com * nu_com - c(m) * nu_ax * nu_ax);
  result.model_frequencies_hz(n - 1) = nu_com;
  return result;
}

// Ion with the largest |eta_{j,m}| for mode m; ties resolve to the lowest ion
// index so assignments are reproducible across platforms.
inline int assign_ion_for_mode(const ModeTable& modes, int mode) {
  if (mode < 0 || mode >= modes.n_modes())
    throw ValidationError("assign_ion_for_mode: mode index out of range");
  return detail::argmax_with_ties(modes.lamb_dicke.col(mode).cwiseAbs());
}

// Ion with the largest |eta_{j,m} * eta_{j,n}| for the mode pair (m, n).
inline int assign_ion_for_pair(const ModeTable& modes, int mode_m, int mode_n) {
  if (mode_m == mode_n)
    throw ValidationError("assign_ion_for_pair: the two modes must differ");
  if (mode_m < 0 || mode_m >= modes.n_modes() || mode_n < 0 || mode_n >= modes.n_modes())
    throw ValidationError("assign_ion_for_pair: mode index out of range");
  Eigen::VectorXd products =
      (modes.lamb_dicke.col(mode_m).array() * modes.lamb_dicke.col(mode_n).array()).abs();
  return detail::argmax_with_ties(products);
}

// Best achievable coupling product per mode pair, in units of the squared
// single-ion scale (i.e. on the normalized mode vectors): for every pair
// (m, n) take max_j |b_{j,m} b_{j,n}| and compare against 1/N, the square of
// the COM coupling. Reports the fraction of pairs above threshold and the
// mean/std of the best products.
inline ConnectivityStats connectivity_stats(int n_ions, SpacingMode spacing) {
  if (n_ions < 2) throw ValidationError("connectivity_stats: need at least 2 ions");

  Eigen::VectorXd u;
  if (spacing == SpacingMode::equal) {
    u.resize(n_ions);
    for (int i = 0; i < n_ions; ++i) u(i) = static_cast<double>(i);
  } else {
    u = detail::equilibrium_dimensionless(n_ions);
  }

  // Mode vectors come from the dimensionless coupling matrix alone; the
  // transverse confinement only shifts all eigenvalues and cannot reorder the
  // eigenvectors, so no trap frequencies are needed here.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::transverse_coupling(u));
  const Eigen::MatrixXd& b = es.eigenvectors();

  const double threshold = 1.0 / static_cast<double>(n_ions);
  double sum = 0.0, sum_sq = 0.0;
  int above = 0, n_pairs = 0;
  for (int m = 0; m < n_ions; ++m) {
    for (int n = m + 1; n < n_ions; ++n) {
      const double best = (b.col(m).array() * b.col(n).array()).abs().maxCoeff();
      sum += best;
      sum_sq += best * best;
      if (best >= threshold) ++above;
      ++n_pairs;
    }
  }

  ConnectivityStats stats;
  stats.n_ions = n_ions;
  stats.fraction_above_threshold = static_cast<double>(above) / n_pairs;
  stats.mean_best_product = sum / n_pairs;
  const double var = sum_sq / n_pairs - stats.mean_best_product * stats.mean_best_product;
  stats.std_best_product = std::sqrt(std::max(0.0, var));
  return stats;
}

// Closed-form mode-spacing estimate for an N-ion chain with uniform-ish
// frequency distribution.
inline double spacing_estimate_hz(double nu_com_hz, double nu_min_hz, int n_ions) {
  if (n_ions < 2) throw ValidationError("spacing_estimate: need at least 2 modes");
  return (nu_com_hz - nu_min_hz) / static_cast<double>(n_ions);
}

struct SpacingRow {
  int n_ions = 0;
  double nu_min_hz = 0.0;
  double nu_max_hz = 0.0;
  double estimate_hz = 0.0;    // (nu_max - nu_min)/N, the closed-form estimate
  double median_gap_hz = 0.0;  // median of consecutive gaps in the exact spectrum
};

// Exact vs estimated transverse mode spacing over a range of chain sizes.
// params provides the COM frequency and either a fixed spacing or an axial
// frequency; n_ions inside params is ignored in favor of the sweep value.
inline std::vector<SpacingRow> mode_spacing_scaling(const std::vector<int>& n_values,
                                                    TrapParams params) {
  std::vector<SpacingRow> rows;
  rows.reserve(n_values.size());
  for (int n : n_values) {
    if (n < 2)
      throw ValidationError("mode_spacing_scaling: spacing is undefined for fewer than 2 modes");
    params.n_ions = n;
    ModeTable table = transverse_modes(params);
    SpacingRow row;
    row.n_ions = n;
    row.nu_min_hz = table.frequencies_hz(0);
    row.nu_max_hz = table.frequencies_hz(n - 1);
    row.estimate_hz = spacing_estimate_hz(row.nu_max_hz, row.nu_min_hz, n);
    std::vector<double> gaps(static_cast<std::size_t>(n - 1));
    for (int m = 0; m + 1 < n; ++m)
      gaps[static_cast<std::size_t>(m)] = table.frequencies_hz(m + 1) - table.frequencies_hz(m);
    std::sort(gaps.begin(), gaps.end());
    row.median_gap_hz = gaps[gaps.size() / 2];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace phonet::ionchain
