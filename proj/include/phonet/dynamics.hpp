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

// Ground-truth time-domain simulations: the full two-tone sideband drive on
// a truncated (spin x modes) Hilbert space, an open-system Lindblad path for
// the noise budget, thermal-state / sideband thermometry helpers, and the
// small fitting routines used to analyze those signals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phonet/constants.hpp"
#include "phonet/errors.hpp"
#include "phonet/integrate.hpp"
#include "phonet/ionchain.hpp"
#include "phonet/network.hpp"

namespace phonet::dynamics {

using ionchain::ModeTable;
using network::BeamSplitterSpec;

//=============================================================================
// Hilbert space and drive Hamiltonian
//=============================================================================

// Tensor product of the included modes (each truncated at a maximum
// occupation) with an optional spin-1/2 of the driven ion. Index layout:
// spin is the slowest axis, then modes in list order.
struct TruncatedHilbert {
  std::vector<int> modes;    // chain mode indices
  std::vector<int> cutoffs;  // max occupation per included mode
  bool include_spin = true;

  int mode_count() const { return static_cast<int>(modes.size()); }

  int dim() const {
    int d = include_spin ? 2 : 1;
    for (int c : cutoffs) d *= c + 1;
    return d;
  }

  void validate() const {
    if (modes.size() != cutoffs.size())
      throw ValidationError("TruncatedHilbert: modes/cutoffs size mismatch");
    for (int c : cutoffs)
      if (c < 1) throw ValidationError("TruncatedHilbert: cutoffs must be >= 1");
  }

  int mode_slot(int chain_mode) const {
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (modes[i] == chain_mode) return static_cast<int>(i);
    throw ValidationError("TruncatedHilbert: chain mode not included");
  }

  // index = (spin * prod + ...) with occupation digits, slot 0 fastest.
  int stride(int slot) const {
    int s = 1;
    for (int i = 0; i < slot; ++i) s *= cutoffs[static_cast<std::size_t>(i)] + 1;
    return s;
  }

  int occupation(int index, int slot) const {
    return (index / stride(slot)) % (cutoffs[static_cast<std::size_t>(slot)] + 1);
  }

  int spin(int index) const {
    if (!include_spin) return 0;
    int block = 1;
    for (int c : cutoffs) block *= c + 1;
    return index / block;
  }

  int mode_block() const {
    int block = 1;
    for (int c : cutoffs) block *= c + 1;
    return block;
  }

  int index_of(int spin_state, const std::vector<int>& occ) const {
    int idx = include_spin ? spin_state * mode_block() : 0;
    for (std::size_t s = 0; s < occ.size(); ++s)
      idx += occ[s] * stride(static_cast<int>(s));
    return idx;
  }
};

// Sine-edged pulse envelope: quarter-sine ramps of length ramp * duration on
// each side, flat in between. The squared envelope integrates to
// duration * (1 - ramp).
inline double pulse_envelope(double t, double duration, double ramp_fraction) {
  if (t <= 0.0 || t >= duration) return 0.0;
  const double edge = ramp_fraction * duration;
  if (edge <= 0.0) return 1.0;
  if (t < edge) return std::sin(0.5 * constants::pi * t / edge);
  if (t > duration - edge) return std::sin(0.5 * constants::pi * (duration - t) / edge);
  return 1.0;
}

// One tone of the two-tone drive, addressing the red sideband of
// target_mode with an extra detuning (Hz, positive above the sideband).
struct DriveComponent {
  int target_mode = 0;
  double detuning_hz = 0.0;
  double peak_rabi_hz = 0.0;  // bare carrier Rabi frequency Omega
  double phase_rad = 0.0;
};

struct DriveSpec {
  int ion = 0;
  std::vector<DriveComponent> components;
  double duration_s = 0.0;
  double ramp_fraction = 0.1;

  void validate() const {
    if (duration_s <= 0.0) throw ValidationError("DriveSpec: duration must be positive");
    if (ramp_fraction < 0.0 || ramp_fraction > 0.5)
      throw ValidationError("DriveSpec: ramp_fraction must lie in [0, 0.5]");
    if (components.empty()) throw ValidationError("DriveSpec: no drive components");
  }
};

namespace detail {

// A sparse Hamiltonian term T with a complex time-dependent coefficient;
// H(t) = sum_terms c(t) T + conj(c(t)) T^dag. Entries hold real amplitudes.
struct SparseTerm {
  std::vector<int> rows, cols;
  std::vector<double> amps;
  // c(t) = prefactor * envelope(t) * exp(-i rotation * t)
  cplx prefactor;
  double rotation_rad_s = 0.0;
};

struct DriveHamiltonian {
  int dim = 0;
  double duration = 0.0;
  double ramp = 0.0;
  std::vector<SparseTerm> terms;

  void apply(double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& dxdt) const {
    dxdt.setZero();
    const double env = pulse_envelope(t, duration, ramp);
    if (env == 0.0) return;
    for (const auto& term : terms) {
      const cplx c = term.prefactor * env *
                     std::exp(cplx(0.0, -term.rotation_rad_s * t));
      const cplx cc = std::conj(c);
      for (std::size_t e = 0; e < term.amps.size(); ++e) {
        const int r = term.rows[e];
        const int cidx = term.cols[e];
        const double a = term.amps[e];
        // dpsi = -i H psi
        dxdt(r) += cplx(0.0, -1.0) * c * a * x(cidx);
        dxdt(cidx) += cplx(0.0, -1.0) * cc * a * x(r);
      }
    }
  }

  Eigen::MatrixXcd dense(double t) const {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    const double env = pulse_envelope(t, duration, ramp);
    if (env == 0.0) return h;
    for (const auto& term : terms) {
      const cplx c = term.prefactor * env *
                     std::exp(cplx(0.0, -term.rotation_rad_s * t));
      for (std::size_t e = 0; e < term.amps.size(); ++e) {
        h(term.rows[e], term.cols[e]) += c * term.amps[e];
        h(term.cols[e], term.rows[e]) += std::conj(c) * term.amps[e];
      }
    }
    return h;
  }
};

// sigma+ a_slot on the truncated space: |down, n> -> sqrt(n) |up, n - e_slot>.
inline SparseTerm sideband_term(const TruncatedHilbert& h, int slot) {
  SparseTerm term;
  const int block = h.mode_block();
  for (int idx = 0; idx < block; ++idx) {
    const int n = h.occupation(idx, slot);
    if (n == 0) continue;
    term.rows.push_back(block + idx - h.stride(slot));  // spin up, one phonon fewer
    term.cols.push_back(idx);                           // spin down
    term.amps.push_back(std::sqrt(static_cast<double>(n)));
  }
  return term;
}

// sigma+ (carrier): |down, n> -> |up, n>.
inline SparseTerm carrier_term(const TruncatedHilbert& h) {
  SparseTerm term;
  const int block = h.mode_block();
  for (int idx = 0; idx < block; ++idx) {
    term.rows.push_back(block + idx);
    term.cols.push_back(idx);
    term.amps.push_back(1.0);
  }
  return term;
}

}  // namespace detail

struct FullSimOptions {
  bool include_carrier = false;  // carrier light shift is treated as calibrated out
  double rtol = 1e-10;
  double atol = 1e-12;
  int n_samples = 101;
  double leakage_threshold = 1e-6;
  bool keep_states = false;
};

struct BsTrajectory {
  std::vector<double> times_s;
  Eigen::MatrixXd mean_occupation;      // (sample, included mode)
  std::vector<double> spin_up_population;
  std::vector<double> norm;
  std::vector<double> theta_eff_rad;    // from the first two drive targets
  std::vector<Eigen::VectorXcd> states; // only when keep_states
  double max_leakage = 0.0;

  double final_mean_occupation(int slot) const {
    return mean_occupation(mean_occupation.rows() - 1, slot);
  }
};

// Build the interaction-picture drive Hamiltonian: for every tone and every
// included mode a sigma+ a_k term rotating at the tone's detuning from that
// mode's red sideband, plus (optionally) the fast carrier term.
inline detail::DriveHamiltonian build_drive_hamiltonian(const DriveSpec& drive,
                                                        const ModeTable& chain,
                                                        const TruncatedHilbert& hilbert,
                                                        bool include_carrier) {
  drive.validate();
  hilbert.validate();
  if (!hilbert.include_spin)
    throw ValidationError("build_drive_hamiltonian: drive needs the spin in the space");
  if (drive.ion < 0 || drive.ion >= chain.n_ions())
    throw ValidationError("build_drive_hamiltonian: ion index out of range");

  detail::DriveHamiltonian h;
  h.dim = hilbert.dim();
  h.duration = drive.duration_s;
  h.ramp = drive.ramp_fraction;

  for (const auto& comp : drive.components) {
    const double nu_target = chain.frequencies_hz(comp.target_mode);
    const cplx tone_phase = std::exp(cplx(0.0, comp.phase_rad));
    for (int slot = 0; slot < hilbert.mode_count(); ++slot) {
      const int k = hilbert.modes[static_cast<std::size_t>(slot)];
      const double eta = chain.lamb_dicke(drive.ion, k);
      if (eta == 0.0) continue;
      detail::SparseTerm term = detail::sideband_term(hilbert, slot);
      // i (Omega eta / 2) e^{i phi} e^{-i d t}, d = delta + nu_k - nu_target
      term.prefactor = cplx(0.0, 0.5 * angular(comp.peak_rabi_hz) * eta) * tone_phase;
      term.rotation_rad_s =
          angular(comp.detuning_hz + chain.frequencies_hz(k) - nu_target);
      h.terms.push_back(std::move(term));
    }
    if (include_carrier) {
      detail::SparseTerm term = detail::carrier_term(hilbert);
      term.prefactor = cplx(0.5 * angular(comp.peak_rabi_hz), 0.0) * tone_phase;
      term.rotation_rad_s = -angular(nu_target - comp.detuning_hz);
      h.terms.push_back(std::move(term));
    }
  }
  return h;
}

// Integrate the state through one pulse, sampling populations along the way.
inline BsTrajectory simulate_bs_full(const DriveSpec& drive, const ModeTable& chain,
                                     const TruncatedHilbert& hilbert,
                                     const Eigen::VectorXcd& initial,
                                     const FullSimOptions& opts = {}) {
  const detail::DriveHamiltonian h =
      build_drive_hamiltonian(drive, chain, hilbert, opts.include_carrier);
  if (initial.size() != h.dim)
    throw ValidationError("simulate_bs_full: initial state has wrong dimension");

  const int n_samples = std::max(2, opts.n_samples);
  const int n_slots = hilbert.mode_count();
  BsTrajectory traj;
  traj.times_s.resize(static_cast<std::size_t>(n_samples));
  traj.mean_occupation.resize(n_samples, n_slots);
  traj.spin_up_population.resize(static_cast<std::size_t>(n_samples));
  traj.norm.resize(static_cast<std::size_t>(n_samples));
  traj.theta_eff_rad.resize(static_cast<std::size_t>(n_samples));

  const int slot_m = hilbert.mode_slot(drive.components.at(0).target_mode);
  const int slot_n = drive.components.size() > 1
                         ? hilbert.mode_slot(drive.components.at(1).target_mode)
                         : slot_m;

  IntegratorOptions iopts;
  iopts.rtol = opts.rtol;
  iopts.atol = opts.atol;

  Eigen::VectorXcd psi = initial;
  auto rhs = [&h](double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& dxdt) {
    h.apply(t, x, dxdt);
  };

  const int block = hilbert.mode_block();
  for (int s = 0; s < n_samples; ++s) {
    const double t = drive.duration_s * s / (n_samples - 1);
    if (s > 0)
      integrate_adaptive(rhs, psi, drive.duration_s * (s - 1) / (n_samples - 1), t, iopts);

    traj.times_s[static_cast<std::size_t>(s)] = t;
    traj.norm[static_cast<std::size_t>(s)] = psi.norm();
    double up = 0.0;
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(n_slots);
    double leak = 0.0;
    for (int idx = 0; idx < h.dim; ++idx) {
      const double p = std::norm(psi(idx));
      if (idx >= block) up += p;
      bool at_cutoff = false;
      for (int slot = 0; slot < n_slots; ++slot) {
        const int n = hilbert.occupation(idx % block, slot);
        occ(slot) += p * n;
        if (n == hilbert.cutoffs[static_cast<std::size_t>(slot)]) at_cutoff = true;
      }
      if (at_cutoff) leak += p;
    }
    traj.spin_up_population[static_cast<std::size_t>(s)] = up;
    traj.mean_occupation.row(s) = occ.transpose();
    traj.max_leakage = std::max(traj.max_leakage, leak);
    traj.theta_eff_rad[static_cast<std::size_t>(s)] =
        std::atan2(std::sqrt(std::max(0.0, occ(slot_n))),
                   std::sqrt(std::max(0.0, occ(slot_m))));
    if (opts.keep_states) traj.states.push_back(psi);
  }

  if (traj.max_leakage > opts.leakage_threshold)
    throw TruncationError("simulate_bs_full: cutoff leakage " +
                          std::to_string(traj.max_leakage) + " exceeds " +
                          std::to_string(opts.leakage_threshold));
  return traj;
}

// Translate an effective beam-splitter spec into the two-tone drive that
// realizes it on a given chain. resting_spin is the sigma_z eigenvalue the
// ion idles in during the pulse. With compensate_stark the first tone is
// shifted to cancel the differential light shift of the two driven modes,
// keeping the two sidebands balanced (the shift applied is
// -s (w'_m - w'_n), which equalizes the effective detunings).
inline DriveSpec drive_from_bs_spec(const BeamSplitterSpec& bs, const ModeTable& chain,
                                    int resting_spin = -1, bool compensate_stark = true) {
  if (!bs.has_physical())
    throw ValidationError("drive_from_bs_spec: physical parameters missing");
  if (bs.ion < 0 || bs.ion >= chain.n_ions())
    throw ValidationError("drive_from_bs_spec: ion index out of range");

  const double eta_m = chain.lamb_dicke(bs.ion, bs.mode_m);
  const double eta_n = chain.lamb_dicke(bs.ion, bs.mode_n);
  if (eta_m == 0.0 || eta_n == 0.0)
    throw ValidationError("drive_from_bs_spec: ion does not couple to a driven mode");

  DriveSpec drive;
  drive.ion = bs.ion;
  drive.duration_s = *bs.duration_s;
  drive.ramp_fraction = bs.ramp_fraction;
  // phi_bs = phi_m - phi_n: put the relative phase on the first tone.
  drive.components.push_back({bs.mode_m, *bs.delta_hz,
                              std::abs(*bs.coupling_m_hz / eta_m), bs.phi_rad});
  drive.components.push_back({bs.mode_n, *bs.delta_hz,
                              std::abs(*bs.coupling_n_hz / eta_n), 0.0});

  if (compensate_stark) {
    const Eigen::VectorXd shifts = network::ac_stark_shifts(bs, chain);
    drive.components[0].detuning_hz -=
        resting_spin * (shifts(bs.mode_m) - shifts(bs.mode_n));
  }
  return drive;
}

//=============================================================================
// Lindblad master equation
//=============================================================================

struct NoiseModel {
  Eigen::VectorXd heating_rate;        // per included mode, quanta/s
  Eigen::VectorXd motional_dephasing;  // per included mode, 1/s
  double spin_dephasing = 0.0;         // 1/s
  Eigen::VectorXd thermal_nbar;        // initial occupations, used by state prep
  // false: jump operator sqrt(alpha) a^dag a per mode, the number-operator
  // form; true: the textbook infinite-temperature pair sqrt(alpha) a^dag,
  // sqrt(alpha) a, which raises <n> at alpha quanta/s.
  bool heating_as_pair = false;

  void validate() const {
    if ((heating_rate.size() && heating_rate.minCoeff() < 0.0) ||
        (motional_dephasing.size() && motional_dephasing.minCoeff() < 0.0) ||
        spin_dephasing < 0.0)
      throw ValidationError("NoiseModel: rates must be non-negative");
  }
};

namespace detail {

inline Eigen::MatrixXcd mode_annihilation(const TruncatedHilbert& h, int slot) {
  const int dim = h.dim();
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
  const int block = h.mode_block();
  for (int idx = 0; idx < dim; ++idx) {
    const int n = h.occupation(idx % block, slot);
    if (n == 0) continue;
    a(idx - h.stride(slot), idx) = std::sqrt(static_cast<double>(n));
  }
  return a;
}

inline Eigen::MatrixXcd spin_z(const TruncatedHilbert& h) {
  const int dim = h.dim();
  Eigen::MatrixXcd sz = Eigen::MatrixXcd::Zero(dim, dim);
  const int block = h.mode_block();
  for (int idx = 0; idx < dim; ++idx) sz(idx, idx) = idx < block ? -1.0 : 1.0;
  return sz;
}

}  // namespace detail

inline std::vector<Eigen::MatrixXcd> build_lindblad_ops(const NoiseModel& noise,
                                                        const TruncatedHilbert& hilbert) {
  noise.validate();
  std::vector<Eigen::MatrixXcd> ops;
  const int n_slots = hilbert.mode_count();

  for (int slot = 0; slot < n_slots; ++slot) {
    const double alpha =
        noise.heating_rate.size() > slot ? noise.heating_rate(slot) : 0.0;
    if (alpha <= 0.0) continue;
    const Eigen::MatrixXcd a = detail::mode_annihilation(hilbert, slot);
    if (noise.heating_as_pair) {
      ops.push_back(std::sqrt(alpha) * a.adjoint());
      ops.push_back(std::sqrt(alpha) * a);
    } else {
      ops.push_back(std::sqrt(alpha) * (a.adjoint() * a));
    }
  }

  // Collective motional dephasing: one operator summing all modes.
  bool any_mdc = false;
  Eigen::MatrixXcd mdc = Eigen::MatrixXcd::Zero(hilbert.dim(), hilbert.dim());
  for (int slot = 0; slot < n_slots; ++slot) {
    const double kappa =
        noise.motional_dephasing.size() > slot ? noise.motional_dephasing(slot) : 0.0;
    if (kappa <= 0.0) continue;
    const Eigen::MatrixXcd a = detail::mode_annihilation(hilbert, slot);
    mdc += std::sqrt(kappa) * (a.adjoint() * a);
    any_mdc = true;
  }
  if (any_mdc) ops.push_back(std::move(mdc));

  if (noise.spin_dephasing > 0.0) {
    if (!hilbert.include_spin)
      throw ValidationError("build_lindblad_ops: spin dephasing without a spin");
    ops.push_back(std::sqrt(noise.spin_dephasing) * detail::spin_z(hilbert));
  }
  return ops;
}

struct LindbladOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  int n_samples = 21;
};

struct RhoTrajectory {
  std::vector<double> times_s;
  std::vector<Eigen::MatrixXcd> rhos;
  double max_trace_drift = 0.0;
  double min_eigenvalue = 0.0;
};

// d rho/dt = -i [H(t), rho] + sum_c (L rho L^dag - 1/2 {L^dag L, rho}).
inline RhoTrajectory simulate_lindblad(const std::function<Eigen::MatrixXcd(double)>& hamiltonian,
                                       const std::vector<Eigen::MatrixXcd>& lindblad_ops,
                                       const Eigen::MatrixXcd& rho0, double duration_s,
                                       const LindbladOptions& opts = {}) {
  const int dim = static_cast<int>(rho0.rows());
  if (rho0.cols() != dim) throw ValidationError("simulate_lindblad: rho0 must be square");
  if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
    throw ValidationError("simulate_lindblad: rho0 is not Hermitian");
  if (std::abs(rho0.trace() - cplx(1.0, 0.0)) > 1e-8)
    throw ValidationError("simulate_lindblad: rho0 trace is not 1");

  std::vector<Eigen::MatrixXcd> ldl;  // precomputed L^dag L
  ldl.reserve(lindblad_ops.size());
  for (const auto& l : lindblad_ops) ldl.push_back(l.adjoint() * l);

  auto rhs = [&](double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& dxdt) {
    const Eigen::Map<const Eigen::MatrixXcd> rho(x.data(), dim, dim);
    dxdt.resize(x.size());
    Eigen::Map<Eigen::MatrixXcd> drho(dxdt.data(), dim, dim);
    const Eigen::MatrixXcd h = hamiltonian(t);
    drho = cplx(0.0, -1.0) * (h * rho - rho * h);
    for (std::size_t c = 0; c < lindblad_ops.size(); ++c) {
      drho += lindblad_ops[c] * rho * lindblad_ops[c].adjoint();
      drho -= 0.5 * (ldl[c] * rho + rho * ldl[c]);
    }
  };

  IntegratorOptions iopts;
  iopts.rtol = opts.rtol;
  iopts.atol = opts.atol;

  const int n_samples = std::max(2, opts.n_samples);
  RhoTrajectory traj;
  traj.min_eigenvalue = 1.0;

  Eigen::MatrixXcd rho = rho0;
  Eigen::VectorXcd x = Eigen::Map<const Eigen::VectorXcd>(rho.data(), dim * dim);
  for (int s = 0; s < n_samples; ++s) {
    const double t = duration_s * s / (n_samples - 1);
    if (s > 0)
      integrate_adaptive(rhs, x, duration_s * (s - 1) / (n_samples - 1), t, iopts);
    Eigen::MatrixXcd snap = Eigen::Map<const Eigen::MatrixXcd>(x.data(), dim, dim);
    snap = 0.5 * (snap + snap.adjoint().eval());
    traj.times_s.push_back(t);
    traj.max_trace_drift =
        std::max(traj.max_trace_drift, std::abs(snap.trace() - cplx(1.0, 0.0)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(snap, Eigen::EigenvaluesOnly);
    traj.min_eigenvalue = std::min(traj.min_eigenvalue, es.eigenvalues().minCoeff());
    traj.rhos.push_back(std::move(snap));
  }
  return traj;
}

//=============================================================================
// Thermal states and sideband thermometry
//=============================================================================

// Single-mode thermal state p_n = nbar^n / (nbar+1)^{n+1}, renormalized on
// the truncated space once the discarded tail is below 1e-8.
inline Eigen::MatrixXcd thermal_state(double nbar, int cutoff) {
  if (nbar < 0.0) throw ValidationError("thermal_state: nbar must be non-negative");
  if (cutoff < 0) throw ValidationError("thermal_state: negative cutoff");
  Eigen::VectorXd p(cutoff + 1);
  double sum = 0.0;
  for (int n = 0; n <= cutoff; ++n) {
    p(n) = std::pow(nbar / (nbar + 1.0), n) / (nbar + 1.0);
    sum += p(n);
  }
  if (1.0 - sum > 1e-8)
    throw TruncationError("thermal_state: cutoff " + std::to_string(cutoff) +
                          " keeps only " + std::to_string(sum) + " of the mass");
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(cutoff + 1, cutoff + 1);
  for (int n = 0; n <= cutoff; ++n) rho(n, n) = p(n) / sum;
  return rho;
}

// Blue-sideband flopping signal of a thermal state: the n-th Fock layer
// oscillates at sqrt(n+1) times the ground-state sideband Rabi frequency.
// contrast_decay (1/s) multiplies the oscillating part by exp(-gamma t).
inline double bsb_signal(double nbar, double sideband_rabi_hz, double t_s,
                         double contrast_decay = 0.0, int cutoff = 120) {
  if (nbar < 0.0) throw ValidationError("bsb_signal: nbar must be non-negative");
  double sum = 0.0;
  double weight = 0.0;
  for (int n = 0; n <= cutoff; ++n) {
    const double p = std::pow(nbar / (nbar + 1.0), n) / (nbar + 1.0);
    weight += p;
    sum += p * std::cos(std::sqrt(n + 1.0) * angular(sideband_rabi_hz) * t_s);
  }
  sum /= weight;
  return 0.5 * (1.0 - sum * std::exp(-contrast_decay * t_s));
}

struct BsbTrace {
  double wait_time_s = 0.0;
  std::vector<double> times_s;
  std::vector<double> p_up;
};

struct HeatingFitResult {
  std::vector<double> nbar;         // one per trace
  double nbar_intercept = 0.0;
  double rate_quanta_per_s = 0.0;
  double rate_ci95 = 0.0;           // normal-approximation half width
};

namespace detail {

inline double fit_nbar_single(const BsbTrace& trace, double rabi_hz, double nbar_max) {
  if (trace.times_s.size() != trace.p_up.size() || trace.times_s.size() < 4)
    throw ValidationError("fit_heating: trace needs at least 4 samples");
  double mean = std::accumulate(trace.p_up.begin(), trace.p_up.end(), 0.0) /
                static_cast<double>(trace.p_up.size());
  double var = 0.0;
  for (double p : trace.p_up) var += (p - mean) * (p - mean);
  if (var < 1e-12)
    throw SolverError("fit_heating: flat sideband trace, nbar is unconstrained");

  auto sse = [&](double nbar) {
    double s = 0.0;
    for (std::size_t i = 0; i < trace.times_s.size(); ++i) {
      const double r = bsb_signal(nbar, rabi_hz, trace.times_s[i]) - trace.p_up[i];
      s += r * r;
    }
    return s;
  };

  // Coarse scan then golden-section refinement; the SSE landscape has local
  // wiggles from the multi-frequency signal.
  const int n_coarse = 240;
  double best_n = 0.0, best_s = sse(0.0);
  for (int i = 1; i <= n_coarse; ++i) {
    const double nb = nbar_max * i / n_coarse;
    const double s = sse(nb);
    if (s < best_s) {
      best_s = s;
      best_n = nb;
    }
  }
  double a = std::max(0.0, best_n - nbar_max / n_coarse);
  double b = std::min(nbar_max, best_n + nbar_max / n_coarse);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = sse(x1), f2 = sse(x2);
  for (int it = 0; it < 120 && (b - a) > 1e-9 * std::max(1.0, nbar_max); ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1; x1 = b - gr * (b - a); f1 = sse(x1);
    } else {
      a = x1; x1 = x2; f1 = f2; x2 = a + gr * (b - a); f2 = sse(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Thermal occupation per wait time from sideband traces, then a straight-line
// fit of nbar against wait time. The returned confidence interval is the
// normal-approximation 95% half width of the slope.
inline HeatingFitResult fit_heating(const std::vector<BsbTrace>& traces, double rabi_hz,
                                    double nbar_max = 50.0) {
  if (traces.size() < 2)
    throw ValidationError("fit_heating: need at least two wait times");

  HeatingFitResult result;
  result.nbar.reserve(traces.size());
  for (const auto& trace : traces)
    result.nbar.push_back(detail::fit_nbar_single(trace, rabi_hz, nbar_max));

  const std::size_t n = traces.size();
  double st = 0.0, sn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    st += traces[i].wait_time_s;
    sn += result.nbar[i];
  }
  const double tbar = st / n, nbar_mean = sn / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = traces[i].wait_time_s - tbar;
    sxx += dt * dt;
    sxy += dt * (result.nbar[i] - nbar_mean);
  }
  if (sxx == 0.0) throw SolverError("fit_heating: all wait times identical");
  result.rate_quanta_per_s = sxy / sxx;
  result.nbar_intercept = nbar_mean - result.rate_quanta_per_s * tbar;

  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = result.nbar_intercept + result.rate_quanta_per_s * traces[i].wait_time_s;
    ss_res += (result.nbar[i] - pred) * (result.nbar[i] - pred);
  }
  const double dof = n > 2 ? static_cast<double>(n - 2) : 1.0;
  result.rate_ci95 = 1.96 * std::sqrt(ss_res / dof / sxx);
  return result;
}

//=============================================================================
// Fidelity metrics and decay fits
//=============================================================================

// Bhattacharyya-squared overlap of two probability distributions.
inline double population_fidelity(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size())
    throw ValidationError("population_fidelity: length mismatch");
  if (p.minCoeff() < -1e-12 || q.minCoeff() < -1e-12)
    throw ValidationError("population_fidelity: negative entries");
  if (std::abs(p.sum() - 1.0) > 1e-6 || std::abs(q.sum() - 1.0) > 1e-6)
    throw ValidationError("population_fidelity: distributions must be normalized");
  double f = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    f += std::sqrt(std::max(0.0, p(i)) * std::max(0.0, q(i)));
  return f * f;
}

struct FidelityDecayFit {
  double f_initial = 0.0;
  double slope_per_s = 0.0;
  double at(double t_s) const { return f_initial + slope_per_s * t_s; }
};

inline FidelityDecayFit fit_fidelity_decay(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw ValidationError("fit_fidelity_decay: need at least three points");
  double st = 0.0, sf = 0.0;
  for (const auto& [t, f] : points) {
    st += t;
    sf += f;
  }
  const double n = static_cast<double>(points.size());
  const double tbar = st / n, fbar = sf / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [t, f] : points) {
    sxx += (t - tbar) * (t - tbar);
    sxy += (t - tbar) * (f - fbar);
  }
  if (sxx == 0.0)
    throw SolverError("fit_fidelity_decay: all samples at the same time");
  FidelityDecayFit fit;
  fit.slope_per_s = sxy / sxx;
  fit.f_initial = fbar - fit.slope_per_s * tbar;
  return fit;
}

}  // namespace phonet::dynamics
