#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cavpol/units.hpp"

namespace cavpol {

// eps(E) = n0^2 + f/(Ex^2 - E^2 - i*gamma*E)
struct LorentzParams {
  double n0 = 1.5;        // background refractive index
  double f_ev2 = 0.037;   // oscillator strength per unit volume, eV^2
  double Ex_ev = 2.1;     // resonance energy, eV
  double gamma_ev = 0.034;  // FWHM linewidth, eV
};

// eps(E) = eps_inf - Ep^2/(E^2 + i*Gamma*E); defaults approximate silver.
struct DrudeParams {
  double eps_inf = 5.0;
  double Ep_ev = 9.0;      // plasma energy, eV
  double Gamma_ev = 0.07;  // damping, eV
};

struct ConstantIndex {
  double n = 1.0;  // real index, >= 1
};

// Measured (n, k) rows, strictly ascending in energy; linear interpolation.
struct TabulatedOptics {
  std::vector<double> energy_ev;
  std::vector<double> n;
  std::vector<double> k;

  void validate() const {
    if (energy_ev.size() != n.size() || energy_ev.size() != k.size())
      throw std::invalid_argument("tabulated optics: column lengths differ");
    if (energy_ev.size() < 2)
      throw std::invalid_argument("tabulated optics: need at least two rows");
    for (std::size_t i = 1; i < energy_ev.size(); ++i)
      if (!(energy_ev[i] > energy_ev[i - 1]))
        throw std::invalid_argument("tabulated optics: energies not strictly increasing");
    for (double kk : k)
      if (kk < 0.0) throw std::invalid_argument("tabulated optics: negative k");
  }
};

inline cplx lorentz_permittivity(double energy_ev, const LorentzParams& p) {
  const cplx den(p.Ex_ev * p.Ex_ev - energy_ev * energy_ev, -p.gamma_ev * energy_ev);
  return cplx(p.n0 * p.n0, 0.0) + p.f_ev2 / den;
}

inline cplx drude_permittivity(double energy_ev, const DrudeParams& p) {
  const cplx den(energy_ev * energy_ev, p.Gamma_ev * energy_ev);
  return cplx(p.eps_inf, 0.0) - p.Ep_ev * p.Ep_ev / den;
}

// Principal square root with the passive branch Im n >= 0.
inline cplx refractive_index(cplx eps) {
  cplx n = std::sqrt(eps);
  if (n.imag() < 0.0) n = -n;
  return n;
}

inline cplx tabulated_index(double energy_ev, const TabulatedOptics& t) {
  const auto& e = t.energy_ev;
  if (energy_ev < e.front() || energy_ev > e.back()) {
    std::ostringstream msg;
    msg << "tabulated optics: E=" << energy_ev << " eV outside table range ["
        << e.front() << ", " << e.back() << "] eV";
    throw std::out_of_range(msg.str());
  }
  const auto it = std::lower_bound(e.begin(), e.end(), energy_ev);
  const std::size_t hi = static_cast<std::size_t>(it - e.begin());
  if (hi == 0 || e[hi] == energy_ev)
    return cplx(t.n[hi], t.k[hi]);
  const std::size_t lo = hi - 1;
  const double w = (energy_ev - e[lo]) / (e[hi] - e[lo]);
  return cplx(t.n[lo] + w * (t.n[hi] - t.n[lo]), t.k[lo] + w * (t.k[hi] - t.k[lo]));
}

using DielectricModel = std::variant<ConstantIndex, LorentzParams, DrudeParams, TabulatedOptics>;

inline cplx permittivity(const DielectricModel& m, double energy_ev) {
  return std::visit(
      [&](const auto& v) -> cplx {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConstantIndex>)
          return cplx(v.n * v.n, 0.0);
        else if constexpr (std::is_same_v<T, LorentzParams>)
          return lorentz_permittivity(energy_ev, v);
        else if constexpr (std::is_same_v<T, DrudeParams>)
          return drude_permittivity(energy_ev, v);
        else {
          const cplx n = tabulated_index(energy_ev, v);
          return n * n;
        }
      },
      m);
}

inline cplx index_of(const DielectricModel& m, double energy_ev) {
  return refractive_index(permittivity(m, energy_ev));
}

// CSV with header "energy_ev,n,k", rows ascending in energy.
inline TabulatedOptics load_tabulated_csv(std::istream& in) {
  TabulatedOptics t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("tabulated optics CSV: empty file");
  auto strip = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  if (strip(line) != "energy_ev,n,k")
    throw std::invalid_argument("tabulated optics CSV: expected header 'energy_ev,n,k', got '" + line + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double vals[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(row, cell, ','))
        throw std::invalid_argument("tabulated optics CSV line " + std::to_string(lineno) + ": expected 3 columns");
      try {
        vals[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::invalid_argument("tabulated optics CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    t.energy_ev.push_back(vals[0]);
    t.n.push_back(vals[1]);
    t.k.push_back(vals[2]);
  }
  t.validate();
  return t;
}

}  // namespace cavpol
