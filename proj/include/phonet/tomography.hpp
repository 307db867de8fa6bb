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

// Boson-sampling tomography of fixed-total-number multimode states: assemble
// the linear map from input density-matrix elements to output probabilities
// across interferometer settings, search for well-conditioned settings,
// invert measured probabilities, and project the result back onto physical
// states.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phonet/constants.hpp"
#include "phonet/errors.hpp"
#include "phonet/fock.hpp"
#include "phonet/network.hpp"

namespace phonet::tomography {

using network::InterferometerConfig;

// Input states live on the first input_modes modes; ancilla_modes extra
// vacuum modes are appended before the interferometers act.
struct TomographySetup {
  int input_modes = 2;
  int ancilla_modes = 0;
  int total_phonons = 1;
  std::vector<InterferometerConfig> settings;

  int output_modes() const { return input_modes + ancilla_modes; }

  void validate() const {
    if (input_modes < 1) throw ValidationError("TomographySetup: need at least one input mode");
    if (ancilla_modes < 0) throw ValidationError("TomographySetup: negative ancilla count");
    if (total_phonons < 0) throw ValidationError("TomographySetup: negative phonon number");
    if (settings.empty()) throw ValidationError("TomographySetup: no interferometer settings");
    for (const auto& s : settings) {
      if (s.n_modes != output_modes())
        throw ValidationError("TomographySetup: every setting must act on input + ancilla modes");
      s.validate();
    }
  }
};

// Rows are (setting, output state) pairs; columns are input density-matrix
// elements (alpha, beta) flattened row-major over the input sector basis.
struct SuperOperator {
  Eigen::MatrixXcd matrix;
  int n_settings = 0;
  int d_in = 0;   // input sector dimension; columns = d_in^2
  int d_out = 0;  // output sector dimension; rows = n_settings * d_out
  fock::FockSector input_sector;
  fock::FockSector output_sector;

  int column(int alpha, int beta) const { return alpha * d_in + beta; }
};

// Index of each embedded input basis state |alpha, 0...0> in the output
// sector.
inline std::vector<int> embed_input_basis(const fock::FockSector& input,
                                          const fock::FockSector& output) {
  std::vector<int> map(input.size());
  for (std::size_t a = 0; a < input.size(); ++a) {
    std::vector<int> occ = input.basis[a];
    occ.resize(static_cast<std::size_t>(output.n_modes), 0);
    map[a] = output.index_of(occ);
  }
  return map;
}

// L_{(g,v),(alpha,beta)} = <v|U(g)^dag|alpha~> <beta~|U(g)|v> with |alpha~>
// the input state padded with vacuum ancillas.
inline SuperOperator build_superoperator(const TomographySetup& setup) {
  setup.validate();
  SuperOperator op;
  op.input_sector = fock::enumerate_basis(setup.input_modes, setup.total_phonons);
  op.output_sector = fock::enumerate_basis(setup.output_modes(), setup.total_phonons);
  op.n_settings = static_cast<int>(setup.settings.size());
  op.d_in = static_cast<int>(op.input_sector.size());
  op.d_out = static_cast<int>(op.output_sector.size());

  const std::vector<int> embed = embed_input_basis(op.input_sector, op.output_sector);
  op.matrix.resize(op.n_settings * op.d_out, op.d_in * op.d_in);

  for (int g = 0; g < op.n_settings; ++g) {
    const Eigen::MatrixXcd u =
        fock::lift_unitary(network::compose_interferometer(setup.settings[static_cast<std::size_t>(g)]),
                           op.output_sector);
    for (int v = 0; v < op.d_out; ++v) {
      const int row = g * op.d_out + v;
      for (int a = 0; a < op.d_in; ++a)
        for (int b = 0; b < op.d_in; ++b)
          op.matrix(row, op.column(a, b)) =
              std::conj(u(embed[static_cast<std::size_t>(a)], v)) *
              u(embed[static_cast<std::size_t>(b)], v);
    }
  }
  return op;
}

inline Eigen::VectorXcd vectorize(const Eigen::MatrixXcd& rho) {
  const int d = static_cast<int>(rho.rows());
  Eigen::VectorXcd v(d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) v(a * d + b) = rho(a, b);
  return v;
}

inline Eigen::MatrixXcd unvectorize(const Eigen::VectorXcd& v, int d) {
  Eigen::MatrixXcd rho(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) rho(a, b) = v(a * d + b);
  return rho;
}

// Predicted probabilities, concatenated across settings.
inline Eigen::VectorXd predict_probabilities(const SuperOperator& op,
                                             const Eigen::MatrixXcd& rho_in) {
  if (rho_in.rows() != op.d_in || rho_in.cols() != op.d_in)
    throw ValidationError("predict_probabilities: input state has wrong dimension");
  const Eigen::VectorXcd p = op.matrix * vectorize(rho_in);
  return p.real();
}

//=============================================================================
// Maximum-likelihood projection and fidelities
//=============================================================================

// Nearest density matrix in Frobenius norm: Hermitize, then project the
// eigenvalue vector onto the probability simplex (uniform shift + clip at
// zero, the water-filling solution of the constrained 2-norm problem).
inline Eigen::MatrixXcd ml_project(const Eigen::MatrixXcd& rho_raw) {
  const int d = static_cast<int>(rho_raw.rows());
  if (rho_raw.cols() != d) throw ValidationError("ml_project: matrix must be square");
  const Eigen::MatrixXcd herm = 0.5 * (rho_raw + rho_raw.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  Eigen::VectorXd lam = es.eigenvalues();  // ascending

  // Find the water level tau with sum max(lam - tau, 0) = 1: try keeping the
  // top k eigenvalues, largest first.
  Eigen::VectorXd sorted = lam;
  std::sort(sorted.data(), sorted.data() + d, std::greater<double>());
  double tau = 0.0;
  double cumulative = 0.0;
  for (int k = 0; k < d; ++k) {
    cumulative += sorted(k);
    const double candidate = (cumulative - 1.0) / (k + 1);
    if (k + 1 == d || sorted(k + 1) <= candidate) {
      tau = candidate;
      break;
    }
  }
  Eigen::VectorXd clipped(d);
  for (int i = 0; i < d; ++i) clipped(i) = std::max(0.0, lam(i) - tau);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().adjoint();
}

inline double purity(const Eigen::MatrixXcd& rho) {
  return std::real((rho * rho).trace());
}

struct FidelityOptions {
  double psd_tol = 1e-6;    // tolerated negative eigenvalue magnitude
  double trace_tol = 1e-6;  // tolerated deviation of the trace from 1
};

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2. Validation
// tolerances are relaxable so that rounded published matrices can be scored
// as-is.
inline double state_fidelity(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma,
                             const FidelityOptions& opts = {}) {
  const int d = static_cast<int>(rho.rows());
  if (rho.cols() != d || sigma.rows() != d || sigma.cols() != d)
    throw ValidationError("state_fidelity: dimension mismatch");

  auto check = [&](const Eigen::MatrixXcd& m, const char* name) {
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
      throw ValidationError(std::string("state_fidelity: ") + name + " is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -opts.psd_tol)
      throw ValidationError(std::string("state_fidelity: ") + name +
                            " has eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
    if (std::abs(m.trace() - cplx(1.0, 0.0)) > opts.trace_tol)
      throw ValidationError(std::string("state_fidelity: ") + name + " trace deviates by " +
                            std::to_string(std::abs(m.trace() - cplx(1.0, 0.0))));
  };
  check(rho, "rho");
  check(sigma, "sigma");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()));
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXcd sqrt_rho =
      es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> inner(sqrt_rho * sigma * sqrt_rho);
  double f = 0.0;
  for (int i = 0; i < d; ++i) f += std::sqrt(std::max(0.0, inner.eigenvalues()(i)));
  return f * f;
}

//=============================================================================
// Reconstruction
//=============================================================================

struct ReconstructionOptions {
  double singular_value_cutoff = 1e-10;  // relative to the largest
  double block_normalization_tol = 0.05;
  double condition_limit = 1e12;         // on cond(L^dag L)
  std::optional<Eigen::MatrixXcd> target;
};

struct ReconstructionResult {
  Eigen::MatrixXcd rho_raw;
  Eigen::MatrixXcd rho_ml;
  std::optional<double> fidelity_to_target;
  double purity = 0.0;
  double condition_number = 0.0;  // of L^dag L
  double clipped_eigenmass = 0.0; // total negative eigenvalue mass of rho_raw
  int dropped_singular_values = 0;
};

// Linear inversion through the pseudo-inverse of L, followed by the
// Frobenius projection onto physical states.
inline ReconstructionResult reconstruct(const Eigen::VectorXd& probabilities,
                                        const SuperOperator& op,
                                        const ReconstructionOptions& opts = {}) {
  if (probabilities.size() != op.matrix.rows())
    throw ValidationError("reconstruct: probability vector length does not match L");
  for (int g = 0; g < op.n_settings; ++g) {
    const double block_sum = probabilities.segment(g * op.d_out, op.d_out).sum();
    if (std::abs(block_sum - 1.0) > opts.block_normalization_tol)
      throw ValidationError("reconstruct: setting " + std::to_string(g) +
                            " probabilities sum to " + std::to_string(block_sum));
  }

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(op.matrix,
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv(0) * opts.singular_value_cutoff;

  int kept = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++kept;
  if (kept == 0) throw ValidationError("reconstruct: superoperator is identically zero");

  const double cond = (sv(0) / sv(kept - 1)) * (sv(0) / sv(kept - 1));
  if (cond > opts.condition_limit)
    throw ValidationError(
        "reconstruct: cond(L^dag L) = " + std::to_string(cond) +
        " is unusable; add settings or ancilla modes to the configuration");

  Eigen::VectorXcd coeffs = svd.matrixU().leftCols(kept).adjoint() * probabilities.cast<cplx>();
  for (int i = 0; i < kept; ++i) coeffs(i) /= sv(i);
  const Eigen::VectorXcd x = svd.matrixV().leftCols(kept) * coeffs;

  ReconstructionResult result;
  result.dropped_singular_values = static_cast<int>(sv.size()) - kept;
  result.condition_number = cond;
  Eigen::MatrixXcd raw = unvectorize(x, op.d_in);
  result.rho_raw = 0.5 * (raw + raw.adjoint());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(result.rho_raw, Eigen::EigenvaluesOnly);
  for (int i = 0; i < op.d_in; ++i)
    result.clipped_eigenmass += std::max(0.0, -es.eigenvalues()(i));

  result.rho_ml = ml_project(result.rho_raw);
  result.purity = purity(result.rho_ml);
  if (opts.target)
    result.fidelity_to_target = state_fidelity(result.rho_ml, *opts.target);
  return result;
}

//=============================================================================
// Synthetic measurements
//=============================================================================

struct MeasurementOptions {
  long shots = 0;  // 0: exact probabilities
  std::uint64_t seed = 0;
  std::optional<network::DetectionModel> detection;  // binary readout confusion
};

// Probabilities per setting, optionally multinomially sampled and optionally
// passed through the binary-detection confusion model. Patterns are mapped
// back to occupations under number conservation, so the confusion path is
// limited to sectors where that map is unique.
inline Eigen::VectorXd simulate_measurement(const Eigen::MatrixXcd& rho_in,
                                            const SuperOperator& op,
                                            const MeasurementOptions& opts = {}) {
  Eigen::VectorXd p = predict_probabilities(op, rho_in);
  p = p.cwiseMax(0.0);

  if (opts.detection) {
    for (int g = 0; g < op.n_settings; ++g) {
      std::map<network::Pattern, double> hist;
      for (int v = 0; v < op.d_out; ++v) {
        const auto& occ = op.output_sector.basis[static_cast<std::size_t>(v)];
        const network::Pattern pattern = network::pattern_of(occ);
        // forward confusion: per mode, flip with the ion's error rates
        // handled by correct_readout's adjoint below; here we add mass
        // directly per true pattern.
        hist[pattern] += p(g * op.d_out + v);
      }
      // apply the confusion map forward
      std::map<network::Pattern, double> observed;
      for (const auto& [pattern, mass] : hist) {
        // expand over all observed patterns
        const int m = static_cast<int>(pattern.size());
        const int n_pat = 1 << m;
        for (int obs = 0; obs < n_pat; ++obs) {
          double w = mass;
          network::Pattern po(pattern.size());
          for (int k = 0; k < m; ++k) {
            const auto& conf = opts.detection->confusion_for_mode(k);
            const bool truth = pattern[static_cast<std::size_t>(k)];
            const bool seen = (obs >> k) & 1;
            po[static_cast<std::size_t>(k)] = seen;
            if (truth)
              w *= seen ? (1.0 - conf.p_dark_given_bright) : conf.p_dark_given_bright;
            else
              w *= seen ? conf.p_bright_given_dark : (1.0 - conf.p_bright_given_dark);
          }
          if (w > 0.0) observed[po] += w;
        }
      }
      // map observed patterns back to occupations; unresolvable mass is
      // dropped and the block renormalized by the caller's correction step
      Eigen::VectorXd q = Eigen::VectorXd::Zero(op.d_out);
      for (const auto& [pattern, mass] : observed) {
        try {
          const std::vector<int> occ = network::infer_fock_from_binary(
              pattern, op.output_sector.total_phonons, op.output_sector.n_modes);
          q(op.output_sector.index_of(occ)) += mass;
        } catch (const Error&) {
          // lost or ambiguous patterns carry no assignable mass
        }
      }
      p.segment(g * op.d_out, op.d_out) = q;
    }
  }

  if (opts.shots > 0) {
    std::mt19937_64 rng(opts.seed);
    for (int g = 0; g < op.n_settings; ++g) {
      Eigen::VectorXd block = p.segment(g * op.d_out, op.d_out);
      const double total = block.sum();
      if (total <= 0.0)
        throw ValidationError("simulate_measurement: empty probability block");
      std::discrete_distribution<int> dist(block.data(), block.data() + op.d_out);
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(op.d_out);
      for (long s = 0; s < opts.shots; ++s) counts(dist(rng)) += 1.0;
      p.segment(g * op.d_out, op.d_out) = counts / static_cast<double>(opts.shots);
    }
  }
  return p;
}

//=============================================================================
// Configuration optimization
//=============================================================================

// A parameter slot binds one or more (setting, element, angle) positions in
// the template to a single optimized value.
struct ParamRef {
  int setting = 0;
  int element = 0;
  enum class Kind { theta, phi } kind = Kind::theta;
};

struct ConfigTemplate {
  TomographySetup base;                       // settings hold fixed angles
  std::vector<std::vector<ParamRef>> params;  // one entry per free parameter

  TomographySetup instantiate(const Eigen::VectorXd& values) const {
    if (values.size() != static_cast<Eigen::Index>(params.size()))
      throw ValidationError("ConfigTemplate: wrong number of parameter values");
    TomographySetup setup = base;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (const auto& ref : params[i]) {
        auto& element = setup.settings.at(static_cast<std::size_t>(ref.setting))
                            .elements.at(static_cast<std::size_t>(ref.element));
        if (ref.kind == ParamRef::Kind::theta)
          element.theta_rad = values(static_cast<Eigen::Index>(i));
        else
          element.phi_rad = values(static_cast<Eigen::Index>(i));
      }
    }
    return setup;
  }
};

// log det(L^dag L); -inf when singular.
inline double log_det_objective(const TomographySetup& setup) {
  const SuperOperator op = build_superoperator(setup);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(op.matrix);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() < op.d_in * op.d_in)
    return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) <= 0.0 || sv(i) < sv(0) * 1e-14)
      return -std::numeric_limits<double>::infinity();
    sum += 2.0 * std::log(sv(i));
  }
  return sum;
}

struct OptimizationResult {
  TomographySetup best;
  Eigen::VectorXd best_params;
  double objective = 0.0;  // log det(L^dag L)
};

namespace detail {

// Nelder-Mead downhill simplex on [lo, hi] boxes (values clamped).
template <typename F>
inline std::pair<Eigen::VectorXd, double> nelder_mead(F&& f, Eigen::VectorXd x0,
                                                      const Eigen::VectorXd& lo,
                                                      const Eigen::VectorXd& hi,
                                                      int max_iter = 400) {
  const int n = static_cast<int>(x0.size());
  auto clamp = [&](Eigen::VectorXd v) {
    for (int i = 0; i < n; ++i) v(i) = std::clamp(v(i), lo(i), hi(i));
    return v;
  };

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(clamp(x0));
  vals.push_back(f(pts[0]));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd p = pts[0];
    const double step = 0.1 * (hi(i) - lo(i));
    p(i) = p(i) + step <= hi(i) ? p(i) + step : p(i) - step;
    pts.push_back(clamp(p));
    vals.push_back(f(pts.back()));
  }

  auto order = [&]() {
    std::vector<int> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    for (int i : idx) {
      p2.push_back(pts[static_cast<std::size_t>(i)]);
      v2.push_back(vals[static_cast<std::size_t>(i)]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    order();
    if (std::abs(vals.front() - vals.back()) < 1e-12 * (1.0 + std::abs(vals.front())))
      break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = clamp(centroid + (centroid - pts.back()));
    const double fr = f(reflected);
    if (fr < vals.front()) {
      const Eigen::VectorXd expanded = clamp(centroid + 2.0 * (centroid - pts.back()));
      const double fe = f(expanded);
      pts.back() = fe < fr ? expanded : reflected;
      vals.back() = std::min(fe, fr);
    } else if (fr < vals[vals.size() - 2]) {
      pts.back() = reflected;
      vals.back() = fr;
    } else {
      const Eigen::VectorXd contracted = clamp(centroid + 0.5 * (pts.back() - centroid));
      const double fc = f(contracted);
      if (fc < vals.back()) {
        pts.back() = contracted;
        vals.back() = fc;
      } else {
        for (std::size_t i = 1; i < pts.size(); ++i) {
          pts[i] = clamp(pts[0] + 0.5 * (pts[i] - pts[0]));
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  order();
  return {pts.front(), vals.front()};
}

}  // namespace detail

// Multi-start maximization of log det(L^dag L) over the free angles:
// theta in [0, pi], phi in [0, 2 pi). Deterministic for a fixed seed; the
// result is the best local optimum found, not a certified global one.
inline OptimizationResult optimize_configuration(const ConfigTemplate& tmpl,
                                                 int n_starts = 32,
                                                 std::uint64_t seed = 1) {
  if (tmpl.params.empty())
    throw ValidationError("optimize_configuration: template has no free parameters");
  const int n = static_cast<int>(tmpl.params.size());
  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    const bool is_theta = tmpl.params[static_cast<std::size_t>(i)].front().kind == ParamRef::Kind::theta;
    lo(i) = 0.0;
    hi(i) = is_theta ? constants::pi : constants::two_pi;
  }

  auto negative_objective = [&](const Eigen::VectorXd& v) {
    const double obj = log_det_objective(tmpl.instantiate(v));
    return std::isfinite(obj) ? -obj : 1e100;
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  bool found = false;
  Eigen::VectorXd best_x;
  double best_val = 1e100;
  for (int s = 0; s < std::max(1, n_starts); ++s) {
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0(i) = lo(i) + (hi(i) - lo(i)) * uniform(rng);
    auto [x, v] = detail::nelder_mead(negative_objective, x0, lo, hi);
    if (v < best_val) {
      best_val = v;
      best_x = x;
      found = v < 1e99;
    }
  }
  if (!found)
    throw ValidationError(
        "optimize_configuration: det(L^dag L) is singular at every start; the "
        "template cannot resolve the input space");

  OptimizationResult result;
  result.best_params = best_x;
  result.best = tmpl.instantiate(best_x);
  result.objective = -best_val;
  return result;
}

}  // namespace phonet::tomography
