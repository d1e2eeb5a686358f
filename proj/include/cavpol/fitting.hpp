#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavpol/materials.hpp"
#include "cavpol/tmm.hpp"

namespace cavpol {

// Parameters of the canonical cavity stack:
// glass(n0_inc fixed 1.5) / Ag mirror / Lorentz film / Ag mirror / air.
inline std::map<std::string, double> default_stack_params() {
  return {{"L", 628.0},   {"f", 0.037},    {"gamma", 0.034}, {"n0", 1.5}, {"Ex", 2.1},
          {"mirror", 35.0}, {"eps_inf", 5.0}, {"Ep", 9.0},     {"Gamma", 0.07}};
}

inline LayerStack stack_from_params(const std::map<std::string, double>& p) {
  auto get = [&](const char* k) {
    const auto it = p.find(k);
    if (it == p.end()) throw std::invalid_argument(std::string("missing stack parameter ") + k);
    return it->second;
  };
  DrudeParams ag{get("eps_inf"), get("Ep"), get("Gamma")};
  LorentzParams film{get("n0"), get("f"), get("Ex"), get("gamma")};
  LayerStack stack;
  stack.incidence_medium = ConstantIndex{1.5};
  stack.layers = {{get("mirror"), ag}, {get("L"), film}, {get("mirror"), ag}};
  stack.exit_medium = ConstantIndex{1.0};
  return stack;
}

struct FreeParam {
  std::string name;
  double init = 0.0, lo = 0.0, hi = 0.0;
};

struct FitProblem {
  DispersionMap target;
  std::vector<FreeParam> free;
  std::map<std::string, double> fixed;           // overrides of default_stack_params()
  std::vector<std::vector<double>> weights;      // optional, same shape as target.values
  Polarization pol = Polarization::TE;
  int max_iterations = 500;                      // optimizer budget per start
  double tol_rel = 1e-10;                        // simplex value-spread convergence

  void validate() const {
    if (target.energies_ev.empty() || target.momenta_um.empty())
      throw std::invalid_argument("fit problem: empty target grid");
    if (max_iterations < 1) throw std::invalid_argument("fit problem: max_iterations must be >= 1");
    if (!(tol_rel > 0.0)) throw std::invalid_argument("fit problem: tol_rel must be positive");
    const auto canonical = default_stack_params();
    for (const auto& fp : free) {
      if (!canonical.count(fp.name) && !fixed.count(fp.name))
        throw std::invalid_argument("fit problem: unknown free parameter '" + fp.name + "'");
      if (!(fp.lo < fp.hi))
        throw std::invalid_argument("fit problem: bad bounds for '" + fp.name + "'");
      if (fp.init < fp.lo || fp.init > fp.hi)
        throw std::invalid_argument("fit problem: initial value of '" + fp.name +
                                    "' outside bounds");
    }
    for (const auto& [k, v] : fixed)
      if (!canonical.count(k))
        throw std::invalid_argument("fit problem: unknown fixed parameter '" + k + "'");
    if (!weights.empty()) {
      if (weights.size() != target.energies_ev.size())
        throw std::invalid_argument("fit problem: weight matrix row count mismatch");
      for (const auto& row : weights)
        if (row.size() != target.momenta_um.size())
          throw std::invalid_argument("fit problem: weight matrix column count mismatch");
    }
  }

  std::map<std::string, double> resolved(const std::vector<double>& free_values) const {
    auto p = default_stack_params();
    for (const auto& [k, v] : fixed) p[k] = v;
    for (std::size_t i = 0; i < free.size(); ++i) p[free[i].name] = free_values[i];
    return p;
  }
};

// Weighted SSE between the simulated 1-R map and the target on its own grids.
// Simulation failures carry the offending grid point.
inline double fit_objective(const std::map<std::string, double>& params, const DispersionMap& target,
                            const std::vector<std::vector<double>>& weights, Polarization pol) {
  const LayerStack stack = stack_from_params(params);
  double sse = 0.0;
  for (std::size_t i = 0; i < target.energies_ev.size(); ++i) {
    for (std::size_t j = 0; j < target.momenta_um.size(); ++j) {
      const double w = weights.empty() ? 1.0 : weights[i][j];
      if (w == 0.0) continue;
      double model;
      try {
        const auto pc =
            power_coefficients(stack, {target.energies_ev[i], target.momenta_um[j], pol});
        model = 1.0 - pc.R;
      } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "objective evaluation failed at E=" << target.energies_ev[i]
            << " eV, kx=" << target.momenta_um[j] << " um^-1: " << e.what();
        throw std::runtime_error(msg.str());
      }
      const double r = model - target.values[i][j];
      sse += w * r * r;
    }
  }
  return sse;
}

// 3x weight on energies within +-halfwidth of Ex; sharpens splitting-sensitive fits.
inline std::vector<std::vector<double>> near_resonance_weights(const DispersionMap& target,
                                                               double Ex_ev,
                                                               double halfwidth_ev = 0.3,
                                                               double factor = 3.0) {
  std::vector<std::vector<double>> w(target.energies_ev.size(),
                                     std::vector<double>(target.momenta_um.size(), 1.0));
  for (std::size_t i = 0; i < target.energies_ev.size(); ++i)
    if (std::abs(target.energies_ev[i] - Ex_ev) <= halfwidth_ev)
      std::fill(w[i].begin(), w[i].end(), factor);
  return w;
}

struct FitResult {
  std::map<std::string, double> fitted;  // free parameters only
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Box-constrained Nelder-Mead: every candidate is clipped coordinate-wise
// into [lo, hi] before evaluation, so all evaluated points respect bounds.
// Deterministic: simplex built from the initial point with 0.1*(hi-lo) steps
// (sign-flipped at the upper bound), standard alpha=1/gamma=2/rho=0.5/sigma=0.5
// moves, convergence when the value spread falls below 1e-10 relative to
// max(1, |f_best|), capped at 500 iterations.
struct NelderMead {
  std::vector<double> lo, hi;
  std::function<double(const std::vector<double>&)> fn;
  double tol_rel = 1e-10;
  int max_iter = 500;

  std::vector<double> clip(std::vector<double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  }

  FitResult run(const std::vector<double>& x0, std::vector<double>* best_out) const {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> X;
    std::vector<double> F;
    X.push_back(clip(x0));
    for (std::size_t i = 0; i < n; ++i) {
      auto v = x0;
      const double step = 0.1 * (hi[i] - lo[i]);
      v[i] = (v[i] + step <= hi[i]) ? v[i] + step : v[i] - step;
      X.push_back(clip(v));
    }
    for (const auto& x : X) F.push_back(fn(x));
    if (!std::isfinite(F[0]))
      throw std::runtime_error("fit: objective is not finite at the initial point");

    std::vector<std::size_t> idx(n + 1);
    FitResult res;
    int it = 0;
    for (; it < max_iter; ++it) {
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return F[a] < F[b]; });
      const double fb = F[idx[0]], fw = F[idx[n]];
      if (fw - fb <= tol_rel * std::max(1.0, std::abs(fb))) {
        res.converged = true;
        break;
      }
      std::vector<double> c(n, 0.0);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < n; ++i) c[i] += X[idx[r]][i] / static_cast<double>(n);
      auto move = [&](double coef) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = c[i] + coef * (X[idx[n]][i] - c[i]);
        return clip(x);
      };
      const auto xr = move(-1.0);
      const double fr = fn(xr);
      if (fr < F[idx[0]]) {
        const auto xe = move(-2.0);
        const double fe = fn(xe);
        if (fe < fr) { X[idx[n]] = xe; F[idx[n]] = fe; }
        else { X[idx[n]] = xr; F[idx[n]] = fr; }
      } else if (fr < F[idx[n - 1]]) {
        X[idx[n]] = xr;
        F[idx[n]] = fr;
      } else {
        const auto xc = move(fr < F[idx[n]] ? -0.5 : 0.5);
        const double fc = fn(xc);
        if (fc < std::min(fr, F[idx[n]])) {
          X[idx[n]] = xc;
          F[idx[n]] = fc;
        } else {
          for (std::size_t r = 1; r <= n; ++r) {
            for (std::size_t i = 0; i < n; ++i)
              X[idx[r]][i] = X[idx[0]][i] + 0.5 * (X[idx[r]][i] - X[idx[0]][i]);
            X[idx[r]] = clip(X[idx[r]]);
            F[idx[r]] = fn(X[idx[r]]);
          }
        }
      }
    }
    std::size_t b = 0;
    for (std::size_t r = 1; r <= n; ++r)
      if (F[r] < F[b]) b = r;
    res.objective = F[b];
    res.iterations = it;
    if (best_out) *best_out = X[b];
    return res;
  }
};

}  // namespace detail

inline FitResult fit(const FitProblem& problem) {
  problem.validate();
  auto objective_of = [&](const std::vector<double>& free_values) {
    return fit_objective(problem.resolved(free_values), problem.target, problem.weights,
                         problem.pol);
  };
  if (problem.free.empty()) {
    FitResult res;
    res.objective = objective_of({});
    res.converged = true;
    return res;
  }
  detail::NelderMead nm;
  nm.max_iter = problem.max_iterations;
  nm.tol_rel = problem.tol_rel;
  std::vector<double> x0;
  for (const auto& fp : problem.free) {
    nm.lo.push_back(fp.lo);
    nm.hi.push_back(fp.hi);
    x0.push_back(fp.init);
  }
  nm.fn = objective_of;
  std::vector<double> best;
  FitResult res = nm.run(x0, &best);
  for (std::size_t i = 0; i < problem.free.size(); ++i) res.fitted[problem.free[i].name] = best[i];
  return res;
}

// Latin-hypercube restarts inside the bounds (deterministic for a fixed seed);
// the run from the problem's own initial point is always included, best final
// objective wins.
inline FitResult fit_multistart(const FitProblem& problem, int restarts, std::uint64_t seed = 12345) {
  FitResult best = fit(problem);
  if (problem.free.empty() || restarts <= 0) return best;
  std::mt19937_64 rng(seed);
  const std::size_t n = problem.free.size();
  const std::size_t N = static_cast<std::size_t>(restarts);
  std::vector<std::vector<double>> starts(N, std::vector<double>(n));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t d = 0; d < n; ++d) {
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < N; ++i) {
      const double frac = (static_cast<double>(perm[i]) + u01(rng)) / static_cast<double>(N);
      starts[i][d] = problem.free[d].lo + frac * (problem.free[d].hi - problem.free[d].lo);
    }
  }
  for (const auto& s : starts) {
    FitProblem p = problem;
    for (std::size_t d = 0; d < n; ++d) p.free[d].init = s[d];
    const FitResult r = fit(p);
    if (r.objective < best.objective) best = r;
  }
  return best;
}

}  // namespace cavpol
