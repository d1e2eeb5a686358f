#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavpol/units.hpp"

namespace cavpol {

// Ideal-mirror mode ladder. Quantitative mode positions come from the TMM
// (metal penetration shifts them); this closed form only labels orders.
inline double empty_mode_energy(int m, double L_nm, double n0, double kx_um) {
  if (m < 1 || !(L_nm > 0.0)) throw std::invalid_argument("empty_mode_energy: need m >= 1, L > 0");
  const double kz = m * M_PI / L_nm;           // nm^-1
  const double kx = kx_um_to_nm(kx_um);        // nm^-1
  return hbarc_ev_nm / n0 * std::sqrt(kz * kz + kx * kx);
}

struct ModeLadder {
  double L_nm = 628.0;
  double n0 = 1.5;
  std::vector<int> orders;  // strictly increasing, >= 1
};

// Orders whose kx=0 ladder energy lies within +-window of Ex.
inline std::vector<int> modes_near(double L_nm, double n0, double Ex_ev, double window_ev = 1.0) {
  std::vector<int> orders;
  for (int m = 1;; ++m) {
    const double E = empty_mode_energy(m, L_nm, n0, 0.0);
    if (E > Ex_ev + window_ev) break;
    if (E >= Ex_ev - window_ev) orders.push_back(m);
  }
  return orders;
}

enum class Topology { Entangled, Decoupled };

// N cavity modes sharing one exciton (Entangled, (N+1)-dim) or N independent
// mode--exciton pairs (Decoupled, 2N-dim). g = hbar*Omega_R / 2 per mode.
struct CoupledModel {
  std::vector<double> mode_energies_ev;
  double Ex_ev = 2.1;
  double g_ev = 0.064;
  Topology topology = Topology::Entangled;
};

inline Eigen::MatrixXd build_hamiltonian(const CoupledModel& model) {
  const std::size_t N = model.mode_energies_ev.size();
  if (N == 0) throw std::invalid_argument("coupled model needs at least one mode");
  if (model.g_ev < 0.0) throw std::invalid_argument("coupling g must be nonnegative");
  if (model.topology == Topology::Entangled) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N + 1, N + 1);
    for (std::size_t i = 0; i < N; ++i) {
      H(i, i) = model.mode_energies_ev[i];
      H(i, N) = H(N, i) = model.g_ev;
    }
    H(N, N) = model.Ex_ev;
    return H;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  for (std::size_t i = 0; i < N; ++i) {
    H(2 * i, 2 * i) = model.mode_energies_ev[i];
    H(2 * i + 1, 2 * i + 1) = model.Ex_ev;
    H(2 * i, 2 * i + 1) = H(2 * i + 1, 2 * i) = model.g_ev;
  }
  return H;
}

inline std::vector<double> hamiltonian_eigenvalues(const CoupledModel& model) {
  const Eigen::MatrixXd H = build_hamiltonian(model);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("Hermitian eigensolver failed to converge");
  const auto& ev = solver.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());  // ascending
}

struct BranchTrace {
  std::string label;
  std::vector<double> energies_ev;  // aligned to the momentum grid from index 0
};

struct PolaritonBranches {
  std::vector<double> momenta_um;
  std::vector<BranchTrace> branches;
};

namespace detail {

// Labels for the ascending eigenvalues of the kx=0 model.
// Decoupled: LP_m / UP_m from the originating 2x2 block. Entangled: the
// eigenvalue between the two modes bracketing Ex is MP_{m,m+1}; below it
// LP_<order>, above it UP_<order>, orders matched by position.
inline std::vector<std::string> branch_labels(const CoupledModel& model,
                                              const std::vector<int>& orders) {
  const std::size_t N = model.mode_energies_ev.size();
  auto order_name = [&](std::size_t i) {
    return (i < orders.size()) ? std::to_string(orders[i]) : std::to_string(i + 1);
  };
  std::vector<std::pair<double, std::string>> labeled;
  if (model.topology == Topology::Decoupled) {
    for (std::size_t i = 0; i < N; ++i) {
      const double Em = model.mode_energies_ev[i], Ex = model.Ex_ev, g = model.g_ev;
      const double mean = 0.5 * (Em + Ex), half = 0.5 * (Em - Ex);
      const double s = std::sqrt(half * half + g * g);
      labeled.emplace_back(mean - s, "LP_" + order_name(i));
      labeled.emplace_back(mean + s, "UP_" + order_name(i));
    }
    std::stable_sort(labeled.begin(), labeled.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [e, l] : labeled) out.push_back(l);
    return out;
  }
  // Entangled: the N+1 eigenvalues interlace the bare mode ladder, with one
  // extra eigenvalue inside the interval of the two modes bracketing Ex --
  // that one is the mid-polariton. Below it, sorted eigenvalue p tracks mode
  // p from below (LP); above it, eigenvalue p tracks mode p-1 from above (UP).
  std::ptrdiff_t below = -1;
  for (std::size_t i = 0; i < N; ++i)
    if (model.mode_energies_ev[i] <= model.Ex_ev) below = static_cast<std::ptrdiff_t>(i);
  const bool interior = below >= 0 && below + 1 < static_cast<std::ptrdiff_t>(N);
  // Exciton outside the ladder: the detached extremal eigenvalue takes the
  // LP/UP role of the nearest mode, no MP exists.
  const std::ptrdiff_t mp = interior ? below + 1
                            : (below < 0 ? 0 : static_cast<std::ptrdiff_t>(N));
  std::vector<std::string> out(N + 1);
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(N) + 1; ++p) {
    if (p < mp)
      out[p] = "LP_" + order_name(p);
    else if (p > mp)
      out[p] = "UP_" + order_name(p - 1);
    else if (interior)
      out[p] = "MP_" + order_name(below) + "-" + order_name(below + 1);
    else
      out[p] = (below < 0 ? "LP_" : "UP_") + order_name(below < 0 ? 0 : N - 1);
  }
  return out;
}

}  // namespace detail

// Eigenvalue traces over a momentum grid, sorted ascending per kx; labels are
// assigned from the first grid point's configuration.
inline PolaritonBranches eigenbranches(const std::function<CoupledModel(double)>& model_at_kx,
                                       const std::vector<double>& kx_grid_um,
                                       const std::vector<int>& orders = {}) {
  if (kx_grid_um.empty()) throw std::invalid_argument("eigenbranches: empty kx grid");
  PolaritonBranches out;
  out.momenta_um = kx_grid_um;
  const CoupledModel first = model_at_kx(kx_grid_um.front());
  const auto labels = detail::branch_labels(first, orders);
  out.branches.resize(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    out.branches[b].label = labels[b];
    out.branches[b].energies_ev.reserve(kx_grid_um.size());
  }
  for (double kx : kx_grid_um) {
    const auto ev = hamiltonian_eigenvalues(model_at_kx(kx));
    if (ev.size() != labels.size())
      throw std::invalid_argument("eigenbranches: model dimension changed along the grid");
    for (std::size_t b = 0; b < ev.size(); ++b) out.branches[b].energies_ev.push_back(ev[b]);
  }
  return out;
}

struct CriticalLengthParams {
  double n0 = 1.5;
  double gamma_ev = 0.034;
  double f_ev2 = 0.037;
};

struct CriticalLengthResult {
  double L_c_nm = 0.0;
  double residual_nm = 0.0;  // L_c - RHS(L_c) of the implicit equation
};

namespace detail {

inline double critlen_beta(double L_nm, const CriticalLengthParams& p) {
  // beta = 1/(e^{2 pi f L / (h c n0 gamma)} - 1)
  return 1.0 / std::expm1(2.0 * M_PI * p.f_ev2 * L_nm / (hc_ev_nm * p.n0 * p.gamma_ev));
}

// Root form g(L) = L*pi*(1-2*beta)*(f-(n0*gamma)^2) - hc*n0*gamma,
// monotone increasing in L on the physical branch.
inline double critlen_g(double L_nm, const CriticalLengthParams& p) {
  const double ng = p.n0 * p.gamma_ev;
  return L_nm * M_PI * (1.0 - 2.0 * critlen_beta(L_nm, p)) * (p.f_ev2 - ng * ng) -
         hc_ev_nm * ng;
}

}  // namespace detail

inline double critical_length_rhs(double L_nm, const CriticalLengthParams& p) {
  const double ng = p.n0 * p.gamma_ev;
  return hc_ev_nm * ng / (M_PI * (1.0 - 2.0 * detail::critlen_beta(L_nm, p)) * (p.f_ev2 - ng * ng));
}

inline CriticalLengthResult critical_length(const CriticalLengthParams& p,
                                            double bracket_lo_nm = 1.0,
                                            double bracket_hi_nm = 1e5) {
  const double ng = p.n0 * p.gamma_ev;
  if (!(p.gamma_ev > 0.0)) throw std::domain_error("critical length: gamma must be positive");
  if (!(p.f_ev2 > ng * ng)) {
    std::ostringstream msg;
    msg << "critical length: no solution, f = " << p.f_ev2 << " eV^2 must exceed (n0*gamma)^2 = "
        << ng * ng << " eV^2";
    throw std::domain_error(msg.str());
  }
  double lo = bracket_lo_nm, hi = bracket_hi_nm;
  double glo = detail::critlen_g(lo, p), ghi = detail::critlen_g(hi, p);
  if (!(glo < 0.0) || !(ghi > 0.0)) {
    std::ostringstream msg;
    msg << "critical length: root not bracketed by [" << lo << ", " << hi << "] nm (g(lo)="
        << glo << ", g(hi)=" << ghi << ")";
    throw std::runtime_error(msg.str());
  }
  for (int it = 0; it < 200 && hi - lo > 1e-9 * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::critlen_g(mid, p) < 0.0 ? lo : hi) = mid;
  }
  const double L = 0.5 * (lo + hi);
  return {L, L - critical_length_rhs(L, p)};
}

// Consistency relation between the fitted oscillator strength and the
// measured splitting: hbar*Omega_R ~= sqrt(f)/n0.
inline double nominal_rabi(double f_ev2, double n0) {
  if (f_ev2 < 0.0) throw std::invalid_argument("nominal_rabi: f must be nonnegative");
  return std::sqrt(f_ev2) / n0;
}

}  // namespace cavpol
