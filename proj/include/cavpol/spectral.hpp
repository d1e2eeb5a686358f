#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavpol/polariton.hpp"  // BranchTrace / PolaritonBranches
#include "cavpol/tmm.hpp"        // DispersionMap

namespace cavpol {

// 1-R (or emission counts) against an ascending energy grid.
struct Spectrum {
  std::vector<double> energies_ev;
  std::vector<double> values;

  void validate() const {
    if (energies_ev.size() != values.size())
      throw std::invalid_argument("spectrum: grid/value lengths differ");
    if (energies_ev.size() < 3) throw std::invalid_argument("spectrum: need at least 3 points");
    for (std::size_t i = 1; i < energies_ev.size(); ++i)
      if (!(energies_ev[i] > energies_ev[i - 1]))
        throw std::invalid_argument("spectrum: energies must strictly ascend");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("spectrum: non-finite value");
  }
};

struct Dip {
  double center_ev = 0.0;
  double depth = 0.0;       // spectrum value at the (refined) minimum
  double prominence = 0.0;  // topographic prominence in value units
  double fwhm_ev = 0.0;     // width at half prominence
};

using DipSet = std::vector<Dip>;

inline constexpr double default_min_prominence = 0.02;  // fraction of windowed value range

namespace detail {

// Quadratic through (E[i-1..i+1], v[i-1..i+1]); exact vertex on any grid.
// Falls back to the grid point when the parabola is not convex or the vertex
// escapes the neighboring interval.
inline std::pair<double, double> refine_vertex(const std::vector<double>& E,
                                               const std::vector<double>& v, std::size_t i) {
  const double h1 = E[i] - E[i - 1], h2 = E[i + 1] - E[i];
  const double d1 = (v[i] - v[i - 1]) / h1, d2 = (v[i + 1] - v[i]) / h2;
  const double a = (d2 - d1) / (h1 + h2);
  const double b = d1 + a * h1;
  if (!(a > 0.0)) return {E[i], v[i]};
  const double t = -b / (2.0 * a);
  if (t <= -h1 || t >= h2) return {E[i], v[i]};
  return {E[i] + t, v[i] + b * t + a * t * t};
}

// Dips of v on the index range [lo, hi]; min_prominence is an absolute level.
inline DipSet dips_in_range(const std::vector<double>& E, const std::vector<double>& v,
                            std::size_t lo, std::size_t hi, double min_prominence_abs) {
  DipSet out;
  std::size_t i = lo;
  while (i + 1 <= hi) {
    // Compress equal-value runs so plateaus count once.
    std::size_t j = i;
    while (j + 1 <= hi && v[j + 1] == v[i]) ++j;
    const bool left_ok = i > lo && v[i - 1] > v[i];
    const bool right_ok = j < hi && v[j + 1] > v[j];
    if (left_ok && right_ok) {
      // Topographic prominence: barrier height to the first strictly lower
      // point on each side (or the range edge), worst side counts.
      double left_climb = 0.0;
      for (std::size_t p = i; p-- > lo;) {
        left_climb = std::max(left_climb, v[p] - v[i]);
        if (v[p] < v[i]) break;
      }
      double right_climb = 0.0;
      for (std::size_t p = j + 1; p <= hi; ++p) {
        right_climb = std::max(right_climb, v[p] - v[i]);
        if (v[p] < v[i]) break;
      }
      const double prom = std::min(left_climb, right_climb);
      if (prom >= min_prominence_abs && prom > 0.0) {
        Dip d;
        if (i == j) {
          const auto [c, val] = refine_vertex(E, v, i);
          d.center_ev = c;
          d.depth = val;
        } else {
          d.center_ev = 0.5 * (E[i] + E[j]);
          d.depth = v[i];
        }
        d.prominence = prom;
        // FWHM at half prominence, linearly interpolated crossings.
        const double half = v[i] + 0.5 * prom;
        double eL = E[lo];
        for (std::size_t p = i; p-- > lo;) {
          if (v[p] >= half) {
            eL = E[p] + (E[p + 1] - E[p]) * (v[p] - half) / (v[p] - v[p + 1]);
            break;
          }
        }
        double eR = E[hi];
        for (std::size_t p = j + 1; p <= hi; ++p) {
          if (v[p] >= half) {
            eR = E[p] - (E[p] - E[p - 1]) * (v[p] - half) / (v[p] - v[p - 1]);
            break;
          }
        }
        d.fwhm_ev = eR - eL;
        out.push_back(d);
      }
    }
    i = j + 1;
  }
  return out;
}

}  // namespace detail

// Local minima of the spectrum within [window_lo, window_hi], prominence at
// least min_prominence times the windowed value range, centers refined by
// quadratic interpolation.
inline DipSet find_dips(const Spectrum& s, double min_prominence = default_min_prominence,
                        double window_lo_ev = -std::numeric_limits<double>::infinity(),
                        double window_hi_ev = std::numeric_limits<double>::infinity()) {
  s.validate();
  if (!(window_lo_ev < window_hi_ev)) throw std::invalid_argument("find_dips: empty window");
  if (window_lo_ev > s.energies_ev.back() || window_hi_ev < s.energies_ev.front())
    throw std::invalid_argument("find_dips: window does not intersect the energy grid");
  std::size_t lo = 0, hi = s.energies_ev.size() - 1;
  while (s.energies_ev[lo] < window_lo_ev) ++lo;
  while (s.energies_ev[hi] > window_hi_ev) --hi;
  if (hi < lo + 2) return {};
  double vmin = s.values[lo], vmax = s.values[lo];
  for (std::size_t p = lo; p <= hi; ++p) {
    vmin = std::min(vmin, s.values[p]);
    vmax = std::max(vmax, s.values[p]);
  }
  return detail::dips_in_range(s.energies_ev, s.values, lo, hi, min_prominence * (vmax - vmin));
}

// Peaks of a 1-R (or counts) spectrum = dips of the negated trace; depth is
// reported in the original orientation.
inline DipSet find_peaks(const Spectrum& s, double min_prominence = default_min_prominence,
                         double window_lo_ev = -std::numeric_limits<double>::infinity(),
                         double window_hi_ev = std::numeric_limits<double>::infinity()) {
  Spectrum inv{s.energies_ev, s.values};
  for (double& v : inv.values) v = -v;
  DipSet dips = find_dips(inv, min_prominence, window_lo_ev, window_hi_ev);
  for (Dip& d : dips) d.depth = -d.depth;
  return dips;
}

enum class Regime { Coupled, Decoupled, Indeterminate };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Coupled: return "Coupled";
    case Regime::Decoupled: return "Decoupled";
    default: return "Indeterminate";
  }
}

struct RegimeLabel {
  Regime regime = Regime::Indeterminate;
  int dip_count = 0;                // qualifying spectral features near Ex
  double gap_ev = 0.0;              // straddling-pair separation (Decoupled)
  std::vector<double> centers_ev;   // feature centers inside the window
};

// Single-peak vs split-pair decision on a kx=0 spectrum, from the qualifying
// spectral features (peaks of 1-R) inside [Ex - window, Ex + window]:
//   exactly one  -> Coupled;
//   a pair straddling Ex (nearest below + nearest above) separated by at
//   least two grid steps and at most the window  -> Decoupled with that gap;
//   anything else -> Indeterminate.
// The window cap keeps well-separated bare-mode pairs (e.g. f = 0 cavities)
// from being mistaken for a polaritonic gap.
inline RegimeLabel classify_regime(const Spectrum& s, double Ex_ev, double window_ev,
                                   double min_prominence = default_min_prominence) {
  s.validate();
  if (!(window_ev > 0.0)) throw std::invalid_argument("classify_regime: window must be positive");
  if (s.energies_ev.front() > Ex_ev - window_ev || s.energies_ev.back() < Ex_ev + window_ev)
    throw std::invalid_argument("classify_regime: spectrum must span [Ex - window, Ex + window]");
  const DipSet peaks = find_peaks(s, min_prominence, Ex_ev - window_ev, Ex_ev + window_ev);

  RegimeLabel label;
  label.dip_count = static_cast<int>(peaks.size());
  for (const Dip& d : peaks) label.centers_ev.push_back(d.center_ev);
  if (peaks.empty()) return label;

  double step = 0.0;
  for (std::size_t i = 1; i < s.energies_ev.size(); ++i)
    step = std::max(step, s.energies_ev[i] - s.energies_ev[i - 1]);
  const Dip* below = nullptr;
  const Dip* above = nullptr;
  for (const Dip& d : peaks) {
    if (d.center_ev <= Ex_ev) below = &d;            // last one below: nearest
    else if (!above) above = &d;                     // first one above: nearest
  }
  if (below && above) {
    const double gap = above->center_ev - below->center_ev;
    if (gap >= 2.0 * step && gap <= window_ev) {
      label.regime = Regime::Decoupled;
      label.gap_ev = gap;
    }
    return label;  // unresolved or over-wide straddle: Indeterminate
  }
  if (peaks.size() == 1) label.regime = Regime::Coupled;
  return label;
}

struct SplittingResult {
  double rabi_ev = 0.0;  // minimal bracketing-pair separation
  double kx_star_um = 0.0;
};

// Anti-crossing measurement: per momentum column, take the nearest 1-R peaks
// below and above Ex inside [Ex - window, Ex + window]; the Rabi splitting is
// the minimum separation over kx and kx* its location. Peak prominence is
// judged against the full map's value range, not the column's: columns far
// from the crossing carry little signal, and a per-column threshold there
// would promote tiny residual-absorption wiggles into branches.
template <typename BareModeFn>
inline SplittingResult measure_splitting(const DispersionMap& map, BareModeFn&& bare_mode,
                                         double Ex_ev, double window_ev = 0.15,
                                         double min_prominence = default_min_prominence) {
  if (map.energies_ev.size() < 3 || map.momenta_um.empty())
    throw std::invalid_argument("measure_splitting: map too small");
  bool crosses = false;
  double prev = bare_mode(map.momenta_um.front()) - Ex_ev;
  for (double kx : map.momenta_um) {
    const double cur = bare_mode(kx) - Ex_ev;
    if (prev == 0.0 || cur == 0.0 || (prev < 0.0) != (cur < 0.0)) crosses = true;
    prev = cur;
  }
  if (!crosses)
    throw std::invalid_argument("measure_splitting: bare mode does not cross Ex in the map range");

  double vmin = map.values[0][0], vmax = vmin;
  for (const auto& row : map.values)
    for (double v : row) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  const double floor = min_prominence * (vmax - vmin);

  SplittingResult best;
  bool found = false;
  Spectrum col;
  col.energies_ev = map.energies_ev;
  col.values.resize(map.energies_ev.size());
  for (std::size_t j = 0; j < map.momenta_um.size(); ++j) {
    for (std::size_t i = 0; i < map.energies_ev.size(); ++i) col.values[i] = map.values[i][j];
    DipSet peaks = find_peaks(col, min_prominence, Ex_ev - window_ev, Ex_ev + window_ev);
    std::erase_if(peaks, [floor](const Dip& d) { return d.prominence < floor; });
    const Dip* below = nullptr;
    const Dip* above = nullptr;
    for (const Dip& d : peaks) {
      if (d.center_ev <= Ex_ev) below = &d;
      else if (!above) above = &d;
    }
    if (!below || !above) continue;
    const double sep = above->center_ev - below->center_ev;
    if (!found || sep < best.rabi_ev) {
      best.rabi_ev = sep;
      best.kx_star_um = map.momenta_um[j];
      found = true;
    }
  }
  if (!found)
    throw std::runtime_error("measure_splitting: no column shows a pair of dips bracketing Ex "
                             "(no anti-crossing)");
  return best;
}

// Greedy nearest-peak continuation of each seed along increasing kx. A branch
// ends when the next column has no peak within continuity_ev of its last
// energy; truncated branches simply carry fewer samples than the grid.
inline PolaritonBranches trace_branches(const DispersionMap& map, const DipSet& seeds,
                                        double continuity_ev = 0.05,
                                        double min_prominence = default_min_prominence) {
  if (seeds.empty()) throw std::invalid_argument("trace_branches: need at least one seed");
  if (map.energies_ev.size() < 3 || map.momenta_um.empty())
    throw std::invalid_argument("trace_branches: map too small");

  // Peak centers per momentum column, computed once.
  std::vector<std::vector<double>> centers(map.momenta_um.size());
  Spectrum col;
  col.energies_ev = map.energies_ev;
  col.values.resize(map.energies_ev.size());
  for (std::size_t j = 0; j < map.momenta_um.size(); ++j) {
    for (std::size_t i = 0; i < map.energies_ev.size(); ++i) col.values[i] = map.values[i][j];
    for (const Dip& d : find_peaks(col, min_prominence)) centers[j].push_back(d.center_ev);
  }

  PolaritonBranches out;
  out.momenta_um = map.momenta_um;
  for (std::size_t b = 0; b < seeds.size(); ++b) {
    BranchTrace trace;
    trace.label = "branch_" + std::to_string(b);
    double current = seeds[b].center_ev;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const double* nearest = nullptr;
      double dist = continuity_ev;
      for (const double& c : centers[j]) {
        const double d = std::abs(c - current);
        if (d <= dist) {
          dist = d;
          nearest = &c;
        }
      }
      if (!nearest) break;
      current = *nearest;
      trace.energies_ev.push_back(current);
    }
    out.branches.push_back(std::move(trace));
  }
  return out;
}

}  // namespace cavpol
