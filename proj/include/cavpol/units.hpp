#pragma once

#include <complex>

namespace cavpol {

using cplx = std::complex<double>;

// Single source of unit conversions (eV <-> nm).
inline constexpr double hc_ev_nm = 1239.8420;    // h*c
inline constexpr double hbarc_ev_nm = 197.3270;  // hbar*c

// In-plane momentum is um^-1 at every API boundary; internal wavevectors are nm^-1.
inline constexpr double kx_um_to_nm(double kx_um) { return kx_um * 1e-3; }

// Vacuum wavenumber E/(hbar c) in nm^-1.
inline constexpr double k0_of(double energy_ev) { return energy_ev / hbarc_ev_nm; }

}  // namespace cavpol
