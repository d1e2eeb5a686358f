#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavpol/fitting.hpp"
#include "cavpol/spectral.hpp"
#include "cavpol/tmm.hpp"

namespace cavpol {

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_num(const std::string& cell, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": bad number '" + cell + "'");
  }
}

}  // namespace detail

// Writes content to <path>.tmp.<pid> and renames over path, so readers never
// observe a partially written file.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Map CSV: first row = momenta (um^-1) after a label corner cell, first
// column = energies (eV), cells = values.
inline void write_map_csv(std::ostream& out, const DispersionMap& map) {
  out << "energy_ev\\kx_um";
  for (double kx : map.momenta_um) out << ',' << detail::fmt_g17(kx);
  out << '\n';
  for (std::size_t i = 0; i < map.energies_ev.size(); ++i) {
    out << detail::fmt_g17(map.energies_ev[i]);
    for (std::size_t j = 0; j < map.momenta_um.size(); ++j)
      out << ',' << detail::fmt_g17(map.values[i][j]);
    out << '\n';
  }
}

inline DispersionMap read_map_csv(std::istream& in) {
  DispersionMap map;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("map CSV: empty file");
  const auto head = detail::split_csv_line(line);
  if (head.size() < 2) throw std::invalid_argument("map CSV: header must list momenta");
  for (std::size_t c = 1; c < head.size(); ++c)
    map.momenta_um.push_back(detail::parse_num(head[c], "map CSV header"));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = "map CSV line " + std::to_string(lineno);
    if (cells.size() != head.size())
      throw std::invalid_argument(where + ": expected " + std::to_string(head.size()) +
                                  " cells, got " + std::to_string(cells.size()));
    map.energies_ev.push_back(detail::parse_num(cells[0], where));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c)
      row.push_back(detail::parse_num(cells[c], where));
    map.values.push_back(std::move(row));
  }
  if (map.energies_ev.empty()) throw std::invalid_argument("map CSV: no data rows");
  for (std::size_t i = 1; i < map.energies_ev.size(); ++i)
    if (!(map.energies_ev[i] > map.energies_ev[i - 1]))
      throw std::invalid_argument("map CSV: energies must strictly ascend");
  for (std::size_t j = 1; j < map.momenta_um.size(); ++j)
    if (!(map.momenta_um[j] > map.momenta_um[j - 1]))
      throw std::invalid_argument("map CSV: momenta must strictly ascend");
  return map;
}

inline nlohmann::json material_to_json(const DielectricModel& m) {
  using nlohmann::json;
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConstantIndex>)
          return json{{"model", "constant"}, {"n", v.n}};
        else if constexpr (std::is_same_v<T, LorentzParams>)
          return json{{"model", "lorentz"}, {"n0", v.n0}, {"f_ev2", v.f_ev2},
                      {"Ex_ev", v.Ex_ev},  {"gamma_ev", v.gamma_ev}};
        else if constexpr (std::is_same_v<T, DrudeParams>)
          return json{{"model", "drude"}, {"eps_inf", v.eps_inf}, {"Ep_ev", v.Ep_ev},
                      {"Gamma_ev", v.Gamma_ev}};
        else
          return json{{"model", "tabulated"},
                      {"rows", v.energy_ev.size()},
                      {"energy_range_ev", {v.energy_ev.front(), v.energy_ev.back()}}};
      },
      m);
}

inline nlohmann::json map_sidecar_json(const DispersionMap& map, const LayerStack& stack,
                                       Polarization pol) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : stack.layers)
    layers.push_back({{"thickness_nm", l.thickness_nm}, {"material", material_to_json(l.material)}});
  json defects = json::array();
  for (const auto& d : map.defects)
    defects.push_back({{"energy_index", d.energy_index},
                       {"momentum_index", d.momentum_index},
                       {"what", d.what}});
  return json{{"quantity_label", map.quantity_label},
              {"polarization", pol == Polarization::TE ? "TE" : "TM"},
              {"stack",
               {{"incidence_medium", material_to_json(stack.incidence_medium)},
                {"layers", layers},
                {"exit_medium", material_to_json(stack.exit_medium)}}},
              {"grid",
               {{"n_energies", map.energies_ev.size()},
                {"n_momenta", map.momenta_um.size()},
                {"energy_range_ev", {map.energies_ev.front(), map.energies_ev.back()}},
                {"momentum_range_um", {map.momenta_um.front(), map.momenta_um.back()}}}},
              {"defects", defects}};
}

inline nlohmann::json dipset_to_json(const DipSet& dips) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dips)
    arr.push_back({{"center_ev", d.center_ev},
                   {"depth", d.depth},
                   {"prominence", d.prominence},
                   {"fwhm_ev", d.fwhm_ev}});
  return arr;
}

inline nlohmann::json regime_to_json(const RegimeLabel& label) {
  return nlohmann::json{{"regime", to_string(label.regime)},
                        {"dip_count", label.dip_count},
                        {"gap_ev", label.gap_ev},
                        {"centers_ev", label.centers_ev}};
}

// Sweep CSV: one row per cavity length.
struct SweepRow {
  double L_nm = 0.0;
  std::string regime = "Indeterminate";
  double gap_mev = 0.0;
  std::vector<double> dip_centers_ev;
  std::string error;  // non-empty if this length failed
};

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "L_nm,regime,gap_meV,dip_centers_ev,error\n";
  for (const auto& r : rows) {
    out << detail::fmt_g17(r.L_nm) << ',' << r.regime << ',' << detail::fmt_g17(r.gap_mev) << ',';
    for (std::size_t i = 0; i < r.dip_centers_ev.size(); ++i)
      out << (i ? ";" : "") << detail::fmt_g17(r.dip_centers_ev[i]);
    out << ',' << r.error << '\n';
  }
}

// Stacked sweep spectra: first column the energy grid, one column per length.
inline void write_stacked_spectra_csv(std::ostream& out, const std::vector<double>& energies_ev,
                                      const std::vector<double>& lengths_nm,
                                      const std::vector<std::vector<double>>& columns) {
  out << "energy_ev";
  for (double L : lengths_nm) out << ',' << detail::fmt_g17(L);
  out << '\n';
  for (std::size_t i = 0; i < energies_ev.size(); ++i) {
    out << detail::fmt_g17(energies_ev[i]);
    for (const auto& col : columns) out << ',' << (i < col.size() ? detail::fmt_g17(col[i]) : "");
    out << '\n';
  }
}

// Branches CSV: kx column, then one column per labeled branch; truncated
// branches leave trailing cells empty.
inline void write_branches_csv(std::ostream& out, const PolaritonBranches& pb) {
  out << "kx_um";
  for (const auto& b : pb.branches) out << ',' << b.label;
  out << '\n';
  for (std::size_t i = 0; i < pb.momenta_um.size(); ++i) {
    out << detail::fmt_g17(pb.momenta_um[i]);
    for (const auto& b : pb.branches)
      out << ',' << (i < b.energies_ev.size() ? detail::fmt_g17(b.energies_ev[i]) : "");
    out << '\n';
  }
}

// FitProblem JSON: { "target_csv": path, "free": [{name, init, lo, hi}],
//   "fixed": {name: value}, "polarization": "TE"|"TM",
//   "weights": "uniform" | {"near_ex": {"Ex_ev":..., "halfwidth_ev":..., "factor":...}},
//   "multistart": {"restarts": N, "seed": S} (optional),
//   "optimizer": {"max_iterations": N, "tol_rel": t} (optional) }
struct FitJob {
  FitProblem problem;
  int restarts = 0;
  std::uint64_t seed = 12345;
};

inline FitJob load_fit_job(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::invalid_argument("cannot open fit problem file " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("fit problem JSON parse error in " + json_path.string() + ": " +
                                e.what());
  }
  FitJob job;
  if (!j.contains("target_csv"))
    throw std::invalid_argument("fit problem JSON: missing 'target_csv'");
  std::filesystem::path target = j.at("target_csv").get<std::string>();
  if (target.is_relative() && json_path.has_parent_path())
    target = json_path.parent_path() / target;
  std::ifstream tcsv(target);
  if (!tcsv) throw std::invalid_argument("cannot open target map CSV " + target.string());
  job.problem.target = read_map_csv(tcsv);
  const nlohmann::json free_list = j.value("free", nlohmann::json::array());
  for (const auto& fp : free_list) {
    job.problem.free.push_back({fp.at("name").get<std::string>(), fp.at("init").get<double>(),
                                fp.at("lo").get<double>(), fp.at("hi").get<double>()});
  }
  const nlohmann::json fixed_obj = j.value("fixed", nlohmann::json::object());
  for (const auto& [k, v] : fixed_obj.items()) job.problem.fixed[k] = v.get<double>();
  const std::string pol = j.value("polarization", "TE");
  if (pol != "TE" && pol != "TM")
    throw std::invalid_argument("fit problem JSON: polarization must be TE or TM");
  job.problem.pol = pol == "TE" ? Polarization::TE : Polarization::TM;
  if (j.contains("weights") && j.at("weights").is_object()) {
    const auto& w = j.at("weights");
    if (w.contains("near_ex")) {
      const auto& ne = w.at("near_ex");
      job.problem.weights = near_resonance_weights(
          job.problem.target, ne.at("Ex_ev").get<double>(), ne.value("halfwidth_ev", 0.3),
          ne.value("factor", 3.0));
    }
  }
  if (j.contains("multistart")) {
    job.restarts = j.at("multistart").value("restarts", 0);
    job.seed = j.at("multistart").value("seed", std::uint64_t{12345});
  }
  if (j.contains("optimizer")) {
    job.problem.max_iterations = j.at("optimizer").value("max_iterations", 500);
    job.problem.tol_rel = j.at("optimizer").value("tol_rel", 1e-10);
  }
  job.problem.validate();
  return job;
}

inline nlohmann::json fit_result_to_json(const FitResult& r) {
  return nlohmann::json{{"fitted", r.fitted},
                        {"objective", r.objective},
                        {"iterations", r.iterations},
                        {"converged", r.converged}};
}

}  // namespace cavpol
