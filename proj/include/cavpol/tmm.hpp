#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cavpol/materials.hpp"
#include "cavpol/units.hpp"

namespace cavpol {

enum class Polarization { TE, TM };

struct Layer {
  double thickness_nm = 0.0;  // > 0
  DielectricModel material;
};

// Semi-infinite incidence medium / finite layers / semi-infinite exit medium.
struct LayerStack {
  DielectricModel incidence_medium = ConstantIndex{1.5};
  std::vector<Layer> layers;
  DielectricModel exit_medium = ConstantIndex{1.0};

  void validate() const {
    for (const auto& l : layers)
      if (!(l.thickness_nm > 0.0) || !std::isfinite(l.thickness_nm))
        throw std::invalid_argument("layer thickness must be positive and finite");
  }
};

struct PlaneWaveContext {
  double energy_ev = 2.0;
  double kx_um = 0.0;  // in-plane momentum, um^-1, >= 0
  Polarization pol = Polarization::TE;
};

// kz = sqrt((n E / hbar c)^2 - kx^2), branch Im kz >= 0 (Re kz >= 0 on the real axis).
inline cplx kz_in_layer(const PlaneWaveContext& ctx, cplx n) {
  const double kx_nm = kx_um_to_nm(ctx.kx_um);
  const cplx nk0 = n * k0_of(ctx.energy_ev);
  cplx kz = std::sqrt(nk0 * nk0 - kx_nm * kx_nm);
  if (kz.imag() < 0.0) kz = -kz;
  if (kz.imag() == 0.0 && kz.real() < 0.0) kz = -kz;
  return kz;
}

namespace detail {

// Interface admittances: eta = kz (TE) or kz/eps (TM, H-field convention).
// The recursion folds the stack back to front; every exponential has
// |e^{i kz d}| <= 1, so thick absorbing layers cannot overflow.
struct EtaAmplitudes {
  cplx gamma;   // reflection in the eta convention
  cplx t;       // transmission in the eta convention (H-field for TM)
  cplx eta_in;  // incidence-side eta
  cplx eta_out; // exit-side eta
  cplx kz_in;   // incidence-side kz (nm^-1)
};

inline EtaAmplitudes stack_recursion(const LayerStack& stack, const PlaneWaveContext& ctx) {
  stack.validate();
  const std::size_t M = stack.layers.size();
  std::vector<cplx> eta(M + 2), kz(M + 2);
  auto slot = [&](std::size_t i) -> const DielectricModel& {
    if (i == 0) return stack.incidence_medium;
    if (i == M + 1) return stack.exit_medium;
    return stack.layers[i - 1].material;
  };
  for (std::size_t i = 0; i < M + 2; ++i) {
    const cplx eps = permittivity(slot(i), ctx.energy_ev);
    const cplx k = kz_in_layer(ctx, refractive_index(eps));
    kz[i] = k;
    eta[i] = (ctx.pol == Polarization::TE) ? k : k / eps;
  }
  auto rho = [&](std::size_t i) { return (eta[i] - eta[i + 1]) / (eta[i] + eta[i + 1]); };
  auto tau = [&](std::size_t i) { return 2.0 * eta[i] / (eta[i] + eta[i + 1]); };

  cplx G = rho(M), t = tau(M);
  for (std::size_t ii = M; ii-- > 0;) {
    const cplx ph = std::exp(cplx(0.0, 1.0) * kz[ii + 1] * stack.layers[ii].thickness_nm);
    const cplx z = ph * ph;
    const cplx den = 1.0 + rho(ii) * G * z;
    G = (rho(ii) + G * z) / den;
    t = tau(ii) * ph * t / den;
  }
  if (!std::isfinite(G.real()) || !std::isfinite(G.imag()) ||
      !std::isfinite(t.real()) || !std::isfinite(t.imag()))
    throw std::runtime_error("stack evaluation produced non-finite amplitudes");
  return {G, t, eta[0], eta[M + 1], kz[0]};
}

}  // namespace detail

// Field reflection/transmission amplitudes seen from the incidence side.
// TM amplitudes follow the E-field convention: r is sign-flipped from the
// H-field recursion so TE and TM agree at kx = 0, and t carries n_inc/n_exit.
inline std::pair<cplx, cplx> stack_amplitudes(const LayerStack& stack, const PlaneWaveContext& ctx) {
  const auto a = detail::stack_recursion(stack, ctx);
  if (ctx.pol == Polarization::TE) return {a.gamma, a.t};
  const cplx n_in = index_of(stack.incidence_medium, ctx.energy_ev);
  const cplx n_out = index_of(stack.exit_medium, ctx.energy_ev);
  return {-a.gamma, a.t * n_in / n_out};
}

struct PowerCoefficients {
  double R = 0.0, T = 0.0, A = 0.0;
};

// R + T + A = 1. Requires a propagating incident wave (kx < n_inc E / hbar c).
inline PowerCoefficients power_coefficients(const LayerStack& stack, const PlaneWaveContext& ctx) {
  const cplx n_in = index_of(stack.incidence_medium, ctx.energy_ev);
  if (n_in.imag() != 0.0)
    throw std::invalid_argument("power coefficients need a lossless incidence medium");
  const double kx_nm = kx_um_to_nm(ctx.kx_um);
  const double k_in = n_in.real() * k0_of(ctx.energy_ev);
  if (!(kx_nm < k_in))
    throw std::invalid_argument("evanescent incidence: kx exceeds n_inc*E/(hbar c)");
  const auto a = detail::stack_recursion(stack, ctx);
  const double R = std::norm(a.gamma);
  // Flux factor: Re(eta_exit)/eta_inc in the recursion's own eta convention,
  // which reproduces Re(n cos(theta)) ratios for TE and the kz/eps form for TM.
  const double T = std::norm(a.t) * (a.eta_out.real() / a.eta_in.real());
  return {R, T, 1.0 - R - T};
}

struct MapDefect {
  std::size_t energy_index = 0, momentum_index = 0;
  std::string what;
};

struct DispersionMap {
  std::vector<double> energies_ev;            // ascending
  std::vector<double> momenta_um;             // ascending
  std::vector<std::vector<double>> values;    // [energy][momentum]
  std::string quantity_label = "1-R";
  std::vector<MapDefect> defects;
};

// values[i][j] = 1 - R(E_i, kx_j). Defective points (evanescent incidence,
// evaluation failure) are clamped to the nearest evaluable kx and flagged.
inline DispersionMap dispersion_map(const LayerStack& stack,
                                    std::vector<double> energies_ev,
                                    std::vector<double> momenta_um,
                                    Polarization pol,
                                    unsigned max_threads = 0) {
  if (energies_ev.empty() || momenta_um.empty())
    throw std::invalid_argument("dispersion map: empty grid");
  for (std::size_t i = 1; i < energies_ev.size(); ++i)
    if (!(energies_ev[i] > energies_ev[i - 1]))
      throw std::invalid_argument("dispersion map: energies must ascend");
  for (std::size_t j = 1; j < momenta_um.size(); ++j)
    if (!(momenta_um[j] > momenta_um[j - 1]))
      throw std::invalid_argument("dispersion map: momenta must ascend");

  DispersionMap map;
  map.energies_ev = std::move(energies_ev);
  map.momenta_um = std::move(momenta_um);
  map.values.assign(map.energies_ev.size(), std::vector<double>(map.momenta_um.size(), 0.0));
  std::vector<std::vector<MapDefect>> row_defects(map.energies_ev.size());

  auto eval_row = [&](std::size_t i) {
    const double E = map.energies_ev[i];
    for (std::size_t j = 0; j < map.momenta_um.size(); ++j) {
      PlaneWaveContext ctx{E, map.momenta_um[j], pol};
      double v;
      try {
        const auto pc = power_coefficients(stack, ctx);
        v = 1.0 - pc.R;
      } catch (const std::exception& e) {
        // Clamp to just inside the propagating cone at this energy and flag.
        try {
          const cplx n_in = index_of(stack.incidence_medium, E);
          const double kx_edge = n_in.real() * k0_of(E) / kx_um_to_nm(1.0) * (1.0 - 1e-9);
          ctx.kx_um = std::min(ctx.kx_um, kx_edge);
          const auto pc = power_coefficients(stack, ctx);
          v = 1.0 - pc.R;
        } catch (const std::exception&) {
          v = 0.0;  // unevaluable even at the clamped point
        }
        row_defects[i].push_back({i, j, e.what()});
      }
      map.values[i][j] = std::min(1.0, std::max(0.0, v));
    }
  };

  const std::size_t n = map.energies_ev.size();
  unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
  if (hw < 1) hw = 1;
  const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(hw, n));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) eval_row(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += nthreads) eval_row(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& rd : row_defects)
    map.defects.insert(map.defects.end(), rd.begin(), rd.end());
  return map;
}

}  // namespace cavpol
