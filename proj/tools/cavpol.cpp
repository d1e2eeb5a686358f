// cavpol: planar-microcavity polariton toolkit.
//
// Subcommands: simulate | critlen | sweep | fit.  Runs are driven by a plain
// key = value config file (see README for the schema); flags override file
// values.  Relative output paths land in $CAVPOL_OUT_DIR (or the current
// directory).  Exit codes: 0 success, 2 input error, 3 no solution, 4 fit not
// converged.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cavpol/config.hpp"
#include "cavpol/fitting.hpp"
#include "cavpol/heatmap.hpp"
#include "cavpol/map_io.hpp"
#include "cavpol/polariton.hpp"
#include "cavpol/spectral.hpp"
#include "cavpol/tmm.hpp"

namespace fs = std::filesystem;
using namespace cavpol;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNoSolution = 3;
constexpr int kExitNotConverged = 4;

fs::path resolve_output(const std::string& raw, const std::string& out_dir_flag) {
  fs::path p = raw;
  if (p.is_absolute()) return p;
  if (!out_dir_flag.empty()) return fs::path(out_dir_flag) / p;
  if (const char* env = std::getenv("CAVPOL_OUT_DIR"); env && *env) return fs::path(env) / p;
  return p;
}

Polarization parse_pol(const std::string& s) {
  if (s == "TE" || s == "te") return Polarization::TE;
  if (s == "TM" || s == "tm") return Polarization::TM;
  throw ConfigError("polarization must be TE or TM, got '" + s + "'");
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::string& pol_flag, double kx_clip, unsigned threads, bool quiet) {
  const Config cfg = Config::parse_file(config_path);
  const fs::path base = fs::path(config_path).has_parent_path()
                            ? fs::path(config_path).parent_path()
                            : fs::path(".");
  const LayerStack stack = stack_from_config(cfg, base);
  auto [energies, momenta] = grids_from_config(cfg);

  const std::string pol_str = !pol_flag.empty() ? pol_flag : cfg.get_or("simulate", "polarization", "TE");
  const Polarization pol = parse_pol(pol_str);

  double clip = kx_clip > 0.0 ? kx_clip : cfg.get_double_or("simulate", "kx_clip_um", 0.0);
  if (clip > 0.0) {
    std::vector<double> kept;
    for (double kx : momenta)
      if (kx <= clip) kept.push_back(kx);
    if (kept.empty()) throw ConfigError("kx clip removes the entire momentum grid");
    momenta = std::move(kept);
  }

  const auto t0 = std::chrono::steady_clock::now();
  DispersionMap map = dispersion_map(stack, energies, momenta, pol, threads);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path map_path = resolve_output(cfg.get_or("simulate", "output_map", "map.csv"), out_dir);
  const fs::path sidecar_path =
      resolve_output(cfg.get_or("simulate", "output_sidecar", "map.json"), out_dir);
  atomic_write(map_path, [&](std::ostream& out) { write_map_csv(out, map); });
  atomic_write(sidecar_path, [&](std::ostream& out) {
    out << map_sidecar_json(map, stack, pol).dump(2) << '\n';
  });
  if (cfg.has("simulate", "output_heatmap")) {
    const fs::path png_path = resolve_output(cfg.get("simulate", "output_heatmap"), out_dir);
    const int scale = static_cast<int>(cfg.get_double_or("simulate", "heatmap_scale", 1.0));
    write_heatmap_png(png_path, map, scale);
    if (!quiet) std::cout << "heatmap:  " << png_path.string() << '\n';
  }
  if (!quiet) {
    std::cout << "map:      " << map_path.string() << "  (" << map.energies_ev.size() << " x "
              << map.momenta_um.size() << " in " << dt << " s)\n"
              << "sidecar:  " << sidecar_path.string() << '\n';
    if (!map.defects.empty())
      std::cout << "defects:  " << map.defects.size() << " grid points clamped (see sidecar)\n";
  }
  return kExitOk;
}

int run_critlen(double n0, double gamma_mev, std::optional<double> f_ev2,
                std::optional<double> f_mev2, bool as_json) {
  CriticalLengthParams p;
  p.n0 = n0;
  p.gamma_ev = gamma_mev * 1e-3;
  if (f_ev2 && f_mev2) throw ConfigError("give either --f-ev2 or --f-mev2, not both");
  if (f_ev2) p.f_ev2 = *f_ev2;
  else if (f_mev2) p.f_ev2 = *f_mev2 * 1e-6;
  try {
    const CriticalLengthResult r = critical_length(p);
    if (as_json) {
      std::cout << nlohmann::json{{"L_c_nm", r.L_c_nm}, {"residual_nm", r.residual_nm}}.dump()
                << '\n';
    } else {
      std::printf("L_c = %.4f nm  (implicit-equation residual %.3e nm)\n", r.L_c_nm,
                  r.residual_nm);
    }
    return kExitOk;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoSolution;
  }
}

int run_sweep(const std::string& config_path, const std::string& out_dir, unsigned threads,
              bool quiet) {
  const Config cfg = Config::parse_file(config_path);
  const fs::path base = fs::path(config_path).has_parent_path()
                            ? fs::path(config_path).parent_path()
                            : fs::path(".");
  const LayerStack proto_stack = stack_from_config(cfg, base);
  const auto layer_names = cfg.get_words("stack", "layers");
  const std::string swept = cfg.get("sweep", "layer");
  std::vector<std::size_t> swept_slots;
  for (std::size_t i = 0; i < layer_names.size(); ++i)
    if (layer_names[i] == swept) swept_slots.push_back(i);
  if (swept_slots.empty())
    throw ConfigError(cfg.at_line(cfg.line_of("sweep", "layer")) + ": swept layer '" + swept +
                      "' is not in the stack");

  const double L0 = cfg.get_double("sweep", "L_min_nm");
  const double L1 = cfg.get_double("sweep", "L_max_nm");
  const double dL = cfg.get_double("sweep", "L_step_nm");
  if (!(dL > 0.0))
    throw ConfigError(cfg.at_line(cfg.line_of("sweep", "L_step_nm")) + ": step must be positive");
  const double Ex = cfg.get_double_or("sweep", "Ex_ev", 2.1);
  const double window = cfg.get_double_or("sweep", "window_ev", 0.15);
  const double prominence = cfg.get_double_or("sweep", "prominence", default_min_prominence);
  const double e0 = cfg.get_double_or("sweep", "energy_min_ev", Ex - 2.0 * window);
  const double e1 = cfg.get_double_or("sweep", "energy_max_ev", Ex + 2.0 * window);
  const long npts = cfg.get_int("sweep", "energy_points");
  const std::vector<double> energies = linspace(e0, e1, npts);

  std::vector<double> lengths;
  for (double L = L0; L <= L1 + 1e-9; L += dL) lengths.push_back(L);

  std::vector<SweepRow> rows(lengths.size());
  std::vector<std::vector<double>> columns(lengths.size());
  auto eval_one = [&](std::size_t idx) {
    SweepRow& row = rows[idx];
    row.L_nm = lengths[idx];
    try {
      LayerStack stack = proto_stack;
      for (std::size_t slot : swept_slots) stack.layers[slot].thickness_nm = lengths[idx];
      Spectrum s;
      s.energies_ev = energies;
      s.values.reserve(energies.size());
      for (double E : energies)
        s.values.push_back(1.0 - power_coefficients(stack, {E, 0.0, Polarization::TE}).R);
      columns[idx] = s.values;
      const RegimeLabel label = classify_regime(s, Ex, window, prominence);
      row.regime = to_string(label.regime);
      row.gap_mev = label.gap_ev * 1e3;
      row.dip_centers_ev = label.centers_ev;
    } catch (const std::exception& e) {
      row.regime = "Error";
      row.error = e.what();
    }
  };

  unsigned hw = threads ? threads : std::thread::hardware_concurrency();
  if (hw < 1) hw = 1;
  const unsigned nthreads = static_cast<unsigned>(
      std::min<std::size_t>(hw, lengths.empty() ? 1 : lengths.size()));
  if (nthreads <= 1 || lengths.size() <= 1) {
    for (std::size_t i = 0; i < lengths.size(); ++i) eval_one(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < lengths.size(); i += nthreads) eval_one(i);
      });
    for (auto& th : pool) th.join();
  }

  const fs::path rows_path =
      resolve_output(cfg.get_or("sweep", "output_rows", "sweep.csv"), out_dir);
  const fs::path spectra_path =
      resolve_output(cfg.get_or("sweep", "output_spectra", "sweep_spectra.csv"), out_dir);
  atomic_write(rows_path, [&](std::ostream& out) { write_sweep_csv(out, rows); });
  atomic_write(spectra_path, [&](std::ostream& out) {
    write_stacked_spectra_csv(out, energies, lengths, columns);
  });
  if (!quiet) {
    std::cout << "rows:     " << rows_path.string() << "  (" << rows.size() << " lengths)\n"
              << "spectra:  " << spectra_path.string() << '\n';
  }
  return kExitOk;
}

int run_fit(const std::string& problem_path, const std::string& out_flag,
            const std::string& out_dir, std::optional<int> restarts_flag,
            std::optional<std::uint64_t> seed_flag, bool quiet) {
  FitJob job = load_fit_job(problem_path);
  if (restarts_flag) job.restarts = *restarts_flag;
  if (seed_flag) job.seed = *seed_flag;
  const FitResult result =
      job.restarts > 0 ? fit_multistart(job.problem, job.restarts, job.seed) : fit(job.problem);
  const std::string out_name =
      !out_flag.empty() ? out_flag : fs::path(problem_path).stem().string() + ".result.json";
  const fs::path out_path = resolve_output(out_name, out_dir);
  atomic_write(out_path, [&](std::ostream& out) {
    out << fit_result_to_json(result).dump(2) << '\n';
  });
  if (!quiet) {
    std::cout << "result:   " << out_path.string() << '\n';
    for (const auto& [k, v] : result.fitted) std::cout << "  " << k << " = " << v << '\n';
    std::cout << "  objective = " << result.objective << ", iterations = " << result.iterations
              << (result.converged ? " (converged)" : " (iteration-capped)") << '\n';
  }
  return result.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planar-microcavity polariton toolkit: TMM dispersion maps, critical-length "
               "solver, thickness sweeps, and TMM parameter fits"};
  app.require_subcommand(1);
  std::string out_dir;
  bool quiet = false;
  app.add_option("--out-dir", out_dir, "Directory for relative output paths (overrides CAVPOL_OUT_DIR)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  auto* sim = app.add_subcommand("simulate", "Generate a 1-R dispersion map from a config file");
  std::string sim_config, sim_pol;
  double sim_kx_clip = 0.0;
  unsigned sim_threads = 0;
  sim->add_option("config", sim_config, "Run configuration file")->required();
  sim->add_option("--polarization", sim_pol, "TE or TM (overrides config)");
  sim->add_option("--kx-clip", sim_kx_clip, "Drop momenta above this kx (um^-1), e.g. an NA bound");
  sim->add_option("--threads", sim_threads, "Worker threads (default: hardware)");

  auto* crit = app.add_subcommand("critlen", "Solve the implicit critical-length equation");
  double crit_n0 = 1.5, crit_gamma_mev = 34.0;
  std::optional<double> crit_f_ev2, crit_f_mev2;
  bool crit_json = false;
  crit->add_option("--n0", crit_n0, "Background refractive index")->capture_default_str();
  crit->add_option("--gamma-mev", crit_gamma_mev, "Absorption FWHM in meV")->capture_default_str();
  crit->add_option("--f-ev2", crit_f_ev2, "Oscillator strength in eV^2 (default 0.037)");
  crit->add_option("--f-mev2", crit_f_mev2, "Oscillator strength in meV^2 (alternative to --f-ev2)");
  crit->add_flag("--json", crit_json, "Emit a machine-readable record");

  auto* sweep = app.add_subcommand("sweep", "Classify kx=0 spectra across a thickness range");
  std::string sweep_config;
  unsigned sweep_threads = 0;
  sweep->add_option("config", sweep_config, "Sweep configuration file")->required();
  sweep->add_option("--threads", sweep_threads, "Worker threads (default: hardware)");

  auto* fitc = app.add_subcommand("fit", "Recover stack parameters from a target dispersion map");
  std::string fit_problem, fit_out;
  std::optional<int> fit_restarts;
  std::optional<std::uint64_t> fit_seed;
  fitc->add_option("problem", fit_problem, "Fit problem JSON file")->required();
  fitc->add_option("--out", fit_out, "Result JSON path (default: <problem>.result.json)");
  fitc->add_option("--restarts", fit_restarts, "Latin-hypercube restarts (overrides problem file)");
  fitc->add_option("--seed", fit_seed, "Restart RNG seed (overrides problem file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage error
    return kExitInput;
  }

  try {
    if (*sim)
      return run_simulate(sim_config, out_dir, sim_pol, sim_kx_clip, sim_threads, quiet);
    if (*crit)
      return run_critlen(crit_n0, crit_gamma_mev, crit_f_ev2, crit_f_mev2, crit_json);
    if (*sweep) return run_sweep(sweep_config, out_dir, sweep_threads, quiet);
    if (*fitc)
      return run_fit(fit_problem, fit_out, out_dir, fit_restarts, fit_seed, quiet);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoSolution;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
