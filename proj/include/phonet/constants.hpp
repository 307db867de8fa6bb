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

#include <complex>

namespace phonet {

using cplx = std::complex<double>;

namespace constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;           // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double coulomb_constant = 8.9875517923e9;    // N m^2 / C^2
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg

// 171Yb+, the workhorse ion of this library
inline constexpr double yb171_mass_kg = 170.936330 * atomic_mass_unit;

// Net two-photon wavevector of a pair of perpendicular 355 nm Raman beams,
// projected on the transverse mode direction: |dk| = sqrt(2) * 2 pi / lambda.
inline constexpr double raman_355_perp_wavevector = 2.50269404749456e7; // 1/m

}  // namespace constants

// Angular <-> ordinary frequency. All public interfaces speak ordinary Hz;
// the conversion happens exactly once, inside the dynamics kernels.
inline constexpr double angular(double f_hz) { return constants::two_pi * f_hz; }
inline constexpr double ordinary(double w_rad_s) { return w_rad_s / constants::two_pi; }

}  // namespace phonet
