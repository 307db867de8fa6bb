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

// Fixed-total-number Fock sectors over M bosonic modes, matrix permanents,
// and the lift of an M x M mode unitary to the sector basis. Two independent
// lifting routes are provided: the permanent formula (production path) and a
// dense generator-promotion route kept as a cross-check oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "phonet/constants.hpp"
#include "phonet/errors.hpp"

namespace phonet::fock {

inline constexpr std::size_t max_basis_size = 1000000;
inline constexpr int max_permanent_dim = 24;

// All occupation vectors of n_modes modes with a fixed phonon total, ordered
// lexicographically descending: (N,0,...,0) first, (0,...,0,N) last. The
// ordering is an internal convention only; serialized probability vectors
// always carry explicit occupation labels.
struct FockSector {
  int n_modes = 0;
  int total_phonons = 0;
  std::vector<std::vector<int>> basis;

  std::size_t size() const { return basis.size(); }

  int index_of(const std::vector<int>& occupation) const {
    auto it = index_.find(key(occupation));
    if (it == index_.end())
      throw ValidationError("FockSector: occupation vector not in sector");
    return it->second;
  }

  bool contains(const std::vector<int>& occupation) const {
    return index_.find(key(occupation)) != index_.end();
  }

  void rebuild_index() {
    index_.clear();
    index_.reserve(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i)
      index_.emplace(key(basis[i]), static_cast<int>(i));
  }

 private:
  static std::string key(const std::vector<int>& v) {
    std::string k;
    k.reserve(v.size() * 3);
    for (int x : v) {
      k += std::to_string(x);
      k += ',';
    }
    return k;
  }
  std::unordered_map<std::string, int> index_;
};

inline std::size_t sector_dimension(int n_modes, int total_phonons) {
  // C(N + M - 1, N) with overflow guard against the capacity limit.
  long double r = 1.0L;
  for (int i = 1; i <= total_phonons; ++i) {
    r *= static_cast<long double>(n_modes - 1 + i) / i;
    if (r > 4.0L * max_basis_size) return 4 * max_basis_size;
  }
  return static_cast<std::size_t>(r + 0.5L);
}

inline FockSector enumerate_basis(int n_modes, int total_phonons) {
  if (n_modes < 1) throw ValidationError("enumerate_basis: need at least one mode");
  if (total_phonons < 0) throw ValidationError("enumerate_basis: negative phonon number");
  if (sector_dimension(n_modes, total_phonons) > max_basis_size)
    throw CapacityError("enumerate_basis: sector exceeds " +
                        std::to_string(max_basis_size) + " states");

  FockSector sector;
  sector.n_modes = n_modes;
  sector.total_phonons = total_phonons;

  std::vector<int> occ(static_cast<std::size_t>(n_modes), 0);
  // Descending-lex generation: fill each slot with the largest remainder first.
  auto gen = [&](auto&& self, int slot, int remaining) -> void {
    if (slot == n_modes - 1) {
      occ[static_cast<std::size_t>(slot)] = remaining;
      sector.basis.push_back(occ);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      occ[static_cast<std::size_t>(slot)] = k;
      self(self, slot + 1, remaining - k);
    }
  };
  gen(gen, 0, total_phonons);
  sector.rebuild_index();
  return sector;
}

// Permanent by Ryser's formula with Gray-code subset updates, O(2^d d).
// The empty matrix has permanent 1 by convention.
inline cplx permanent(const Eigen::MatrixXcd& a) {
  const int d = static_cast<int>(a.rows());
  if (a.cols() != d) throw ValidationError("permanent: matrix must be square");
  if (d == 0) return cplx(1.0, 0.0);
  if (d > max_permanent_dim)
    throw CapacityError("permanent: dimension exceeds " + std::to_string(max_permanent_dim));

  std::vector<cplx> row_sum(static_cast<std::size_t>(d), cplx(0.0, 0.0));
  cplx total(0.0, 0.0);
  std::uint64_t gray = 0;
  const std::uint64_t n_subsets = std::uint64_t(1) << d;
  for (std::uint64_t k = 1; k < n_subsets; ++k) {
    const std::uint64_t next = k ^ (k >> 1);
    const std::uint64_t diff = next ^ gray;
    int col = 0;
    while (!((diff >> col) & 1)) ++col;
    const double sign_col = (next & diff) ? 1.0 : -1.0;
    for (int r = 0; r < d; ++r) row_sum[static_cast<std::size_t>(r)] += sign_col * a(r, col);
    gray = next;

    cplx prod(1.0, 0.0);
    for (int r = 0; r < d; ++r) prod *= row_sum[static_cast<std::size_t>(r)];
    const int popcount = __builtin_popcountll(next);
    total += ((d - popcount) % 2 == 0) ? prod : -prod;
  }
  return total;
}

// Naive O(d! d) permutation expansion. Reference oracle for tests only.
inline cplx permanent_reference(const Eigen::MatrixXcd& a) {
  const int d = static_cast<int>(a.rows());
  if (a.cols() != d) throw ValidationError("permanent_reference: matrix must be square");
  if (d == 0) return cplx(1.0, 0.0);
  std::vector<int> perm(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
  cplx total(0.0, 0.0);
  do {
    cplx prod(1.0, 0.0);
    for (int r = 0; r < d; ++r) prod *= a(r, perm[static_cast<std::size_t>(r)]);
    total += prod;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

inline double unitarity_defect(const Eigen::MatrixXcd& u) {
  return (u.adjoint() * u - Eigen::MatrixXcd::Identity(u.cols(), u.cols()))
      .cwiseAbs()
      .maxCoeff();
}

inline void require_unitary(const Eigen::MatrixXcd& u, double tol = 1e-10) {
  if (u.rows() != u.cols()) throw ValidationError("require_unitary: matrix must be square");
  const double defect = unitarity_defect(u);
  if (defect > tol)
    throw ValidationError("matrix is not unitary: max|U^dag U - I| = " +
                          std::to_string(defect));
}

namespace detail {

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// Rows/columns of the mode matrix repeated by occupation multiplicity.
inline Eigen::MatrixXcd occupation_submatrix(const Eigen::MatrixXcd& u,
                                             const std::vector<int>& out_occ,
                                             const std::vector<int>& in_occ,
                                             int total) {
  Eigen::MatrixXcd sub(total, total);
  int r = 0;
  for (std::size_t i = 0; i < out_occ.size(); ++i)
    for (int k = 0; k < out_occ[i]; ++k, ++r) {
      int c = 0;
      for (std::size_t j = 0; j < in_occ.size(); ++j)
        for (int l = 0; l < in_occ[j]; ++l, ++c) sub(r, c) = u(static_cast<int>(i), static_cast<int>(j));
    }
  return sub;
}

}  // namespace detail

// Lift an M x M mode unitary to the sector: <out|U_F|in> =
// Per(U[out, in]) / sqrt(prod out_i! prod in_j!). For total phonon number 1
// this reproduces the mode matrix itself in basis order.
inline Eigen::MatrixXcd lift_unitary(const Eigen::MatrixXcd& u_mode,
                                     const FockSector& sector,
                                     double unitarity_tol = 1e-10) {
  if (static_cast<int>(u_mode.rows()) != sector.n_modes)
    throw ValidationError("lift_unitary: mode matrix size does not match sector");
  require_unitary(u_mode, unitarity_tol);

  const int dim = static_cast<int>(sector.size());
  const int n = sector.total_phonons;
  Eigen::MatrixXcd lifted(dim, dim);
  for (int col = 0; col < dim; ++col) {
    const auto& in_occ = sector.basis[static_cast<std::size_t>(col)];
    for (int row = 0; row < dim; ++row) {
      const auto& out_occ = sector.basis[static_cast<std::size_t>(row)];
      double log_norm = 0.0;
      for (int x : out_occ) log_norm += detail::log_factorial(x);
      for (int x : in_occ) log_norm += detail::log_factorial(x);
      const cplx per = permanent(detail::occupation_submatrix(u_mode, out_occ, in_occ, n));
      lifted(row, col) = per * std::exp(-0.5 * log_norm);
    }
  }
  return lifted;
}

// Oracle route: recover the quadratic generator h from U = exp(i h) via the
// spectral logarithm, promote h with creation/annihilation matrix elements,
// and exponentiate on the sector. Eigenvalues near -1 make the principal log
// ambiguous; a global phase twist moves them off the cut and is undone
// exactly afterwards (on a fixed-N sector the number operator is N * I).
inline Eigen::MatrixXcd lift_unitary_dense(const Eigen::MatrixXcd& u_mode,
                                           const FockSector& sector,
                                           double unitarity_tol = 1e-10) {
  if (static_cast<int>(u_mode.rows()) != sector.n_modes)
    throw ValidationError("lift_unitary_dense: mode matrix size does not match sector");
  require_unitary(u_mode, unitarity_tol);

  const int m = sector.n_modes;
  const int dim = static_cast<int>(sector.size());

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(u_mode);
  double phase_twist = 0.0;
  Eigen::MatrixXcd u_shifted = u_mode;
  for (int i = 0; i < m; ++i) {
    if (std::abs(es.eigenvalues()(i) + cplx(1.0, 0.0)) < 1e-6) {
      phase_twist = 1e-3;
      u_shifted = std::exp(cplx(0.0, phase_twist)) * u_mode;
      es.compute(u_shifted);
      break;
    }
  }

  // h = V log(D) V^dag / i, Hermitized to kill round-off in V.
  Eigen::MatrixXcd log_d = Eigen::MatrixXcd::Zero(m, m);
  for (int i = 0; i < m; ++i) log_d(i, i) = cplx(std::arg(es.eigenvalues()(i)), 0.0);
  const Eigen::MatrixXcd& v = es.eigenvectors();
  Eigen::MatrixXcd h = v * log_d * v.inverse();
  h = 0.5 * (h + h.adjoint().eval());

  // Promote: H_F[row, col] = sum_{p,q} h_pq <row| a_p^dag a_q |col>.
  Eigen::MatrixXcd h_lifted = Eigen::MatrixXcd::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    const auto& occ = sector.basis[static_cast<std::size_t>(col)];
    for (int q = 0; q < m; ++q) {
      if (occ[static_cast<std::size_t>(q)] == 0) continue;
      for (int p = 0; p < m; ++p) {
        if (p == q) {
          h_lifted(col, col) += h(q, q) * static_cast<double>(occ[static_cast<std::size_t>(q)]);
          continue;
        }
        std::vector<int> moved = occ;
        moved[static_cast<std::size_t>(q)] -= 1;
        moved[static_cast<std::size_t>(p)] += 1;
        const int row = sector.index_of(moved);
        const double amp = std::sqrt(static_cast<double>(occ[static_cast<std::size_t>(q)]) *
                                     (occ[static_cast<std::size_t>(p)] + 1.0));
        h_lifted(row, col) += h(p, q) * amp;
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hes(h_lifted);
  Eigen::VectorXcd phases(dim);
  for (int i = 0; i < dim; ++i)
    phases(i) = std::exp(cplx(0.0, hes.eigenvalues()(i)));
  Eigen::MatrixXcd lifted =
      hes.eigenvectors() * phases.asDiagonal() * hes.eigenvectors().adjoint();

  if (phase_twist != 0.0)
    lifted *= std::exp(cplx(0.0, -phase_twist * sector.total_phonons));
  return lifted;
}

// Output probabilities p_v = <v| U_F^dag rho U_F |v>. The conjugation
// direction is part of the library's probability convention and is recorded
// in every serialized output.
inline Eigen::VectorXd output_probabilities(const Eigen::MatrixXcd& rho,
                                            const Eigen::MatrixXcd& u_lifted) {
  const int dim = static_cast<int>(u_lifted.rows());
  if (rho.rows() != dim || rho.cols() != dim)
    throw ValidationError("output_probabilities: dimension mismatch");
  const double trace_dev = std::abs(rho.trace() - cplx(1.0, 0.0));
  if (trace_dev > 1e-6)
    throw ValidationError("output_probabilities: input state trace deviates by " +
                          std::to_string(trace_dev));

  Eigen::VectorXd p(dim);
  for (int v = 0; v < dim; ++v) {
    const Eigen::VectorXcd col = u_lifted.col(v);
    p(v) = std::real(col.dot(rho * col));  // dot conjugates the left factor
  }
  return p;
}

// Convenience wrappers around pure states.
inline Eigen::VectorXcd basis_state(const FockSector& sector, const std::vector<int>& occ) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(static_cast<int>(sector.size()));
  psi(sector.index_of(occ)) = cplx(1.0, 0.0);
  return psi;
}

inline Eigen::MatrixXcd density_from_state(const Eigen::VectorXcd& psi) {
  return psi * psi.adjoint();
}

}  // namespace phonet::fock
