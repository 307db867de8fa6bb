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

// Beam splitters between collective modes, driven by a pair of detuned
// sideband tones on a single ion. This module covers the effective (mode
// space) picture: the 2x2 rotation each pulse implements, composition into
// interferometers, the light shifts the drives imprint on every mode, phase
// bookkeeping across sequential pulses, and the binary fluorescence
// detection model with readout-error correction.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phonet/constants.hpp"
#include "phonet/errors.hpp"
#include "phonet/fock.hpp"
#include "phonet/ionchain.hpp"

namespace phonet::network {

using ionchain::ModeTable;

// One beam-splitter pulse. theta/phi define the ideal rotation; the optional
// physical block (detuning, the two eta*Omega coupling products, duration,
// ramp fraction) ties the rotation to laboratory parameters through
// theta = (eta Omega)_m (eta Omega)_n t_eff / (4 delta), with t_eff the
// squared-envelope pulse area.
struct BeamSplitterSpec {
  int mode_m = 0;
  int mode_n = 1;
  int ion = -1;  // -1: not assigned
  double theta_rad = 0.0;
  double phi_rad = 0.0;
  int spin_sign = +1;

  std::optional<double> delta_hz;
  std::optional<double> coupling_m_hz;  // eta_{j,m} * Omega_{j,m}
  std::optional<double> coupling_n_hz;
  std::optional<double> duration_s;
  double ramp_fraction = 0.1;  // per-edge sine ramp, in [0, 0.5]

  bool has_physical() const {
    return delta_hz && coupling_m_hz && coupling_n_hz && duration_s;
  }

  void validate(int n_modes = -1) const {
    if (mode_m == mode_n) throw ValidationError("BeamSplitterSpec: mode_m must differ from mode_n");
    if (mode_m < 0 || mode_n < 0)
      throw ValidationError("BeamSplitterSpec: negative mode index");
    if (n_modes >= 0 && (mode_m >= n_modes || mode_n >= n_modes))
      throw ValidationError("BeamSplitterSpec: mode index out of range");
    if (!std::isfinite(theta_rad) || !std::isfinite(phi_rad))
      throw ValidationError("BeamSplitterSpec: non-finite angle");
    if (spin_sign != 1 && spin_sign != -1)
      throw ValidationError("BeamSplitterSpec: spin_sign must be +1 or -1");
    if (ramp_fraction < 0.0 || ramp_fraction > 0.5)
      throw ValidationError("BeamSplitterSpec: ramp_fraction must lie in [0, 0.5]");
  }
};

// Effective pulse area of the squared sine-edged envelope: each edge ramps
// over ramp_fraction * duration as a quarter sine, contributing half its
// length to the integral of Omega_m(t) Omega_n(t).
inline double effective_duration(double duration_s, double ramp_fraction) {
  return duration_s * (1.0 - ramp_fraction);
}

// Rotation angle from the physical block.
inline double bs_angle_from_params(const BeamSplitterSpec& spec) {
  if (!spec.has_physical())
    throw ValidationError("bs_angle_from_params: physical parameters missing");
  if (*spec.delta_hz == 0.0)
    throw ResonanceError("bs_angle_from_params: zero detuning puts the drive on resonance");
  if (*spec.duration_s < 0.0)
    throw ValidationError("bs_angle_from_params: negative duration");
  const double t_eff = effective_duration(*spec.duration_s, spec.ramp_fraction);
  // All three frequencies convert to angular units; one factor of 2 pi
  // survives: theta = (pi/2) c_m c_n t_eff / |delta|.
  return 0.5 * constants::pi * std::abs(*spec.coupling_m_hz) *
         std::abs(*spec.coupling_n_hz) * t_eff / std::abs(*spec.delta_hz);
}

// Relative mismatch between the stored rotation angle and the one implied by
// the physical block; nullopt when they agree (or no physical block).
inline std::optional<double> angle_consistency_defect(const BeamSplitterSpec& spec,
                                                      double rel_tol = 1e-6) {
  if (!spec.has_physical()) return std::nullopt;
  const double implied = bs_angle_from_params(spec);
  const double scale = std::max(std::abs(spec.theta_rad), std::abs(implied));
  if (scale == 0.0) return std::nullopt;
  const double rel = std::abs(std::abs(spec.theta_rad) - implied) / scale;
  if (rel > rel_tol) return rel;
  return std::nullopt;
}

// Mode-space unitary of one pulse: identity except the (m, n) block
//   [ cos t                i s e^{+i phi} sin t ]
//   [ i s e^{-i phi} sin t          cos t       ]
// with s the spin sign. The placement of e^{+i phi} is fixed against the
// time-domain integration of the drive Hamiltonian (see the dynamics tests)
// and guarded by a regression test.
inline Eigen::MatrixXcd bs_mode_unitary(const BeamSplitterSpec& spec, int n_modes) {
  spec.validate(n_modes);
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n_modes, n_modes);
  const double c = std::cos(spec.theta_rad);
  const double s = std::sin(spec.theta_rad);
  const cplx phase = std::exp(cplx(0.0, spec.phi_rad));
  const cplx is(0.0, static_cast<double>(spec.spin_sign));
  u(spec.mode_m, spec.mode_m) = c;
  u(spec.mode_n, spec.mode_n) = c;
  u(spec.mode_m, spec.mode_n) = is * phase * s;
  u(spec.mode_n, spec.mode_m) = is * std::conj(phase) * s;
  return u;
}

enum class Compensation { none, analytic };

struct InterferometerConfig {
  int n_modes = 0;
  std::vector<BeamSplitterSpec> elements;  // application order: first = first applied
  Compensation compensation = Compensation::none;

  void validate() const {
    if (n_modes < 1) throw ValidationError("InterferometerConfig: need at least one mode");
    for (const auto& e : elements) e.validate(n_modes);
  }
};

// Ordered product of the pulse unitaries, first applied rightmost.
inline Eigen::MatrixXcd compose_interferometer(const InterferometerConfig& config) {
  config.validate();
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(config.n_modes, config.n_modes);
  for (const auto& e : config.elements) u = bs_mode_unitary(e, config.n_modes) * u;
  return u;
}

// Frequency shift every chain mode picks up while one beam-splitter pulse is
// on, in Hz at peak drive power. The two driven modes follow the
// second-order light-shift expression
//   w'_m = (eta_m^2/4) (Omega_m^2/delta - Omega_n^2/(nu_n - nu_m - delta)),
// every spectator mode k the two-tone sum
//   (eta_k Omega_m)^2 / (2 d_{k,m}) + (eta_k Omega_n)^2 / (2 d_{k,n}),
// with d_{k,m} = delta + nu_k - nu_m the detuning of tone m from mode k's
// sideband. Rabi amplitudes are recovered from the coupling products and the
// chain's Lamb-Dicke table.
inline Eigen::VectorXd ac_stark_shifts(const BeamSplitterSpec& spec, const ModeTable& modes) {
  if (!spec.has_physical())
    throw ValidationError("ac_stark_shifts: physical parameters missing");
  if (spec.ion < 0 || spec.ion >= modes.n_ions())
    throw ValidationError("ac_stark_shifts: ion index out of range");
  const int n = modes.n_modes();
  if (spec.mode_m >= n || spec.mode_n >= n)
    throw ValidationError("ac_stark_shifts: mode index out of range");

  const double delta = *spec.delta_hz;
  if (delta == 0.0) throw ResonanceError("ac_stark_shifts: zero detuning");
  const double eta_m = modes.lamb_dicke(spec.ion, spec.mode_m);
  const double eta_n = modes.lamb_dicke(spec.ion, spec.mode_n);
  if (eta_m == 0.0 || eta_n == 0.0)
    throw ValidationError("ac_stark_shifts: assisting ion does not couple to a driven mode");
  const double omega_m = std::abs(*spec.coupling_m_hz / eta_m);
  const double omega_n = std::abs(*spec.coupling_n_hz / eta_n);
  const double nu_m = modes.frequencies_hz(spec.mode_m);
  const double nu_n = modes.frequencies_hz(spec.mode_n);

  Eigen::VectorXd shifts = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    const double eta_k = modes.lamb_dicke(spec.ion, k);
    const double nu_k = modes.frequencies_hz(k);
    if (k == spec.mode_m) {
      shifts(k) = 0.25 * eta_k * eta_k *
                  (omega_m * omega_m / delta - omega_n * omega_n / (nu_n - nu_m - delta));
      continue;
    }
    if (k == spec.mode_n) {
      shifts(k) = 0.25 * eta_k * eta_k *
                  (omega_n * omega_n / delta - omega_m * omega_m / (nu_m - nu_n - delta));
      continue;
    }
    if (eta_k == 0.0) continue;
    const double det_m = delta + nu_k - nu_m;
    const double det_n = delta + nu_k - nu_n;
    if (det_m == 0.0 || det_n == 0.0)
      throw ResonanceError("ac_stark_shifts: tone for mode " +
                           std::to_string((det_m == 0.0 ? spec.mode_m : spec.mode_n) + 1) +
                           " is resonant with the sideband of mode " + std::to_string(k + 1));
    const double gm = eta_k * omega_m;
    const double gn = eta_k * omega_n;
    shifts(k) = 0.5 * gm * gm / det_m + 0.5 * gn * gn / det_n;
  }
  return shifts;
}

// Phase (radians) a mode accumulates over one full pulse: the shift scales
// with Omega^2(t), so the ramped envelope integrates to the same effective
// duration as the rotation angle.
inline double pulse_phase_rad(double shift_hz, const BeamSplitterSpec& spec) {
  return constants::two_pi * shift_hz *
         effective_duration(*spec.duration_s, spec.ramp_fraction);
}

// Adjust every pulse's phase for the light shifts imprinted by all earlier
// pulses: the drive phase that realizes an intended phi is
// phi - (Phi_m - Phi_n), with Phi_k the phase mode k accumulated so far.
// Idempotent through the compensation tag: configs already marked analytic
// are returned unchanged.
inline InterferometerConfig compensate_phases(const InterferometerConfig& config,
                                              const ModeTable& modes) {
  if (config.compensation == Compensation::analytic) return config;
  for (const auto& e : config.elements)
    if (!e.has_physical())
      throw ValidationError("compensate_phases: every element needs physical parameters");

  InterferometerConfig out = config;
  out.compensation = Compensation::analytic;
  Eigen::VectorXd accumulated = Eigen::VectorXd::Zero(modes.n_modes());
  for (auto& e : out.elements) {
    e.phi_rad -= accumulated(e.mode_m) - accumulated(e.mode_n);
    const Eigen::VectorXd shifts = ac_stark_shifts(e, modes);
    for (int k = 0; k < modes.n_modes(); ++k)
      accumulated(k) += pulse_phase_rad(shifts(k), e);
  }
  return out;
}

//=============================================================================
// Binary fluorescence detection
//=============================================================================

using Pattern = std::vector<bool>;  // per mode: true = bright (any phonon)

inline Pattern pattern_of(const std::vector<int>& occupation) {
  Pattern p(occupation.size());
  for (std::size_t i = 0; i < occupation.size(); ++i) p[i] = occupation[i] > 0;
  return p;
}

// Aggregate sector probabilities by bright/dark pattern.
inline std::map<Pattern, double> binary_pattern_distribution(const Eigen::VectorXd& probs,
                                                             const fock::FockSector& sector) {
  if (probs.size() != static_cast<Eigen::Index>(sector.size()))
    throw ValidationError("binary_pattern_distribution: size mismatch");
  std::map<Pattern, double> dist;
  for (std::size_t i = 0; i < sector.size(); ++i)
    dist[pattern_of(sector.basis[i])] += probs(static_cast<Eigen::Index>(i));
  return dist;
}

// Invert a pattern back to an occupation vector under phonon-number
// conservation. Unique for total phonon numbers up to 2; beyond that a
// pattern with fewer bright modes than phonons is ambiguous and the error
// carries all candidates.
inline std::vector<int> infer_fock_from_binary(const Pattern& pattern, int total_phonons,
                                               int n_modes) {
  if (static_cast<int>(pattern.size()) != n_modes)
    throw ValidationError("infer_fock_from_binary: pattern length != n_modes");
  const int bright = static_cast<int>(std::count(pattern.begin(), pattern.end(), true));
  if (bright == 0 && total_phonons > 0)
    throw LostPhononError(
        "infer_fock_from_binary: all-dark pattern with nonzero phonon number "
        "(number conservation violated)");
  if (bright > total_phonons)
    throw ValidationError("infer_fock_from_binary: more bright modes than phonons");

  const fock::FockSector sector = fock::enumerate_basis(n_modes, total_phonons);
  std::vector<std::vector<int>> matches;
  for (const auto& occ : sector.basis)
    if (pattern_of(occ) == pattern) matches.push_back(occ);

  if (matches.empty())
    throw ValidationError("infer_fock_from_binary: no occupation matches the pattern");
  if (matches.size() > 1)
    throw AmbiguousPatternError("infer_fock_from_binary: pattern matches " +
                                    std::to_string(matches.size()) + " occupations",
                                matches);
  return matches.front();
}

// Binary readout confusion of one ion.
struct Confusion {
  double p_bright_given_dark = 0.0;
  double p_dark_given_bright = 0.0;

  void validate() const {
    if (p_bright_given_dark < 0.0 || p_bright_given_dark > 1.0 ||
        p_dark_given_bright < 0.0 || p_dark_given_bright > 1.0)
      throw ValidationError("Confusion: probabilities must lie in [0, 1]");
    if (p_bright_given_dark + p_dark_given_bright >= 1.0)
      throw ValidationError("Confusion: flip probabilities sum to >= 1, matrix is singular");
  }
};

struct DetectionModel {
  std::vector<int> mode_ion;        // per mode, the ion read out for it
  std::vector<Confusion> per_ion;   // indexed by ion

  const Confusion& confusion_for_mode(int mode) const {
    const int ion = mode_ion.at(static_cast<std::size_t>(mode));
    return per_ion.at(static_cast<std::size_t>(ion));
  }
};

struct CorrectedPatterns {
  std::map<Pattern, double> probabilities;
  double clipped_mass = 0.0;  // negative probability removed before renormalizing
};

// Invert the tensor product of per-ion binary confusion matrices on a
// pattern histogram. Raw counts are normalized first; any negative entries
// of the inverted vector are clipped to zero and reported.
inline CorrectedPatterns correct_readout(const std::map<Pattern, double>& pattern_counts,
                                         const DetectionModel& model) {
  if (pattern_counts.empty())
    throw ValidationError("correct_readout: empty histogram");
  const int n_modes = static_cast<int>(pattern_counts.begin()->first.size());
  double total = 0.0;
  for (const auto& [pattern, count] : pattern_counts) {
    if (static_cast<int>(pattern.size()) != n_modes)
      throw ValidationError("correct_readout: inconsistent pattern lengths");
    if (count < 0.0) throw ValidationError("correct_readout: negative count");
    total += count;
  }
  if (total <= 0.0) throw ValidationError("correct_readout: zero total counts");

  const std::size_t dim = std::size_t(1) << n_modes;
  std::vector<double> v(dim, 0.0);
  for (const auto& [pattern, count] : pattern_counts) {
    std::size_t idx = 0;
    for (int m = 0; m < n_modes; ++m)
      if (pattern[static_cast<std::size_t>(m)]) idx |= std::size_t(1) << m;
    v[idx] = count / total;
  }

  // Apply the 2x2 inverse mode by mode. With e0 = p(bright|dark) and
  // e1 = p(dark|bright), C = [[1-e0, e1], [e0, 1-e1]] in (dark, bright)
  // ordering, and C^{-1} follows from the 2x2 adjugate.
  for (int m = 0; m < n_modes; ++m) {
    const Confusion& c = model.confusion_for_mode(m);
    c.validate();
    const double det = 1.0 - c.p_bright_given_dark - c.p_dark_given_bright;
    const std::size_t bit = std::size_t(1) << m;
    for (std::size_t idx = 0; idx < dim; ++idx) {
      if (idx & bit) continue;
      const double dark = v[idx];
      const double bright = v[idx | bit];
      v[idx] = ((1.0 - c.p_dark_given_bright) * dark - c.p_dark_given_bright * bright) / det;
      v[idx | bit] = ((1.0 - c.p_bright_given_dark) * bright - c.p_bright_given_dark * dark) / det;
    }
  }

  CorrectedPatterns out;
  double kept = 0.0;
  for (std::size_t idx = 0; idx < dim; ++idx) {
    if (v[idx] < 0.0) {
      out.clipped_mass += -v[idx];
      v[idx] = 0.0;
    }
    kept += v[idx];
  }
  if (kept <= 0.0) throw ValidationError("correct_readout: correction removed all mass");
  for (std::size_t idx = 0; idx < dim; ++idx) {
    if (v[idx] == 0.0) continue;
    Pattern p(static_cast<std::size_t>(n_modes));
    for (int m = 0; m < n_modes; ++m) p[static_cast<std::size_t>(m)] = (idx >> m) & 1;
    out.probabilities[p] = v[idx] / kept;
  }
  return out;
}

}  // namespace phonet::network
