#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavpol/materials.hpp"
#include "cavpol/tmm.hpp"

namespace cavpol {

// Raised for malformed or incomplete run configuration; the message is
// anchored to "<file>:<line>" whenever a source line is known.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text key = value format with [section] headers ('.' nests by
// convention), full-line comments (# or ;), blank lines ignored.
class Config {
 public:
  static Config parse(std::istream& in, std::string source_name = "<config>") {
    Config cfg;
    cfg.source_ = std::move(source_name);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string s = strip(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3)
          throw ConfigError(cfg.at_line(lineno) + ": malformed section header '" + s + "'");
        section = strip(s.substr(1, s.size() - 2));
        cfg.section_lines_.emplace(section, lineno);
        cfg.sections_[section];  // register even if empty
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(cfg.at_line(lineno) + ": expected 'key = value', got '" + s + "'");
      const std::string key = strip(s.substr(0, eq));
      const std::string value = strip(s.substr(eq + 1));
      if (key.empty()) throw ConfigError(cfg.at_line(lineno) + ": empty key");
      cfg.sections_[section][key] = {value, lineno};
    }
    return cfg;
  }

  static Config parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse(in, path.string());
  }

  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  bool has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
  }

  const std::string& get(const std::string& section, const std::string& key) const {
    const auto sit = sections_.find(section);
    if (sit == sections_.end())
      throw ConfigError(source_ + ": missing section [" + section + "]");
    const auto kit = sit->second.find(key);
    if (kit == sit->second.end())
      throw ConfigError(at_line(section_line(section)) + ": missing key '" + key +
                        "' in section [" + section + "]");
    return kit->second.value;
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    return to_double(get(section, key), section, key);
  }

  double get_double_or(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
  }

  long get_int(const std::string& section, const std::string& key) const {
    const double v = get_double(section, key);
    const long n = static_cast<long>(v);
    if (static_cast<double>(n) != v)
      throw ConfigError(at_line(line_of(section, key)) + ": '" + key + "' must be an integer");
    return n;
  }

  std::vector<std::string> get_words(const std::string& section, const std::string& key) const {
    std::istringstream ss(get(section, key));
    std::vector<std::string> words;
    std::string w;
    while (ss >> w) words.push_back(w);
    return words;
  }

  int line_of(const std::string& section, const std::string& key) const {
    const auto sit = sections_.find(section);
    if (sit != sections_.end()) {
      const auto kit = sit->second.find(key);
      if (kit != sit->second.end()) return kit->second.line;
    }
    return section_line(section);
  }

  const std::string& source() const { return source_; }

  std::string at_line(int line) const { return source_ + ":" + std::to_string(line); }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  int section_line(const std::string& section) const {
    const auto it = section_lines_.find(section);
    return it == section_lines_.end() ? 0 : it->second;
  }

  double to_double(const std::string& raw, const std::string& section,
                   const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      while (used < raw.size() && std::isspace(static_cast<unsigned char>(raw[used]))) ++used;
      if (used != raw.size()) throw std::invalid_argument("trailing junk");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(at_line(line_of(section, key)) + ": '" + key + "' is not a number: '" +
                        raw + "'");
    }
  }

  static std::string strip(std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
  }

  std::string source_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::map<std::string, int> section_lines_;
};

// --- Schema interpretation for simulation runs -------------------------------
//
// [stack]      incidence_n, exit_n, layers = <name> <name> ...
// [material.<name>]  model = constant|lorentz|drude|tabulated, thickness_nm,
//                    and per-model parameters (csv = path for tabulated)
// [grid]       energy_min_ev, energy_max_ev, energy_points,
//              kx_min_um, kx_max_um, kx_points

inline std::pair<double, DielectricModel> material_from_config(
    const Config& cfg, const std::string& name, const std::filesystem::path& base_dir) {
  const std::string section = "material." + name;
  if (!cfg.has_section(section))
    throw ConfigError(cfg.source() + ": stack references undefined material '" + name +
                      "' (expected section [" + section + "])");
  const double thickness = cfg.get_double(section, "thickness_nm");
  if (!(thickness > 0.0))
    throw ConfigError(cfg.at_line(cfg.line_of(section, "thickness_nm")) +
                      ": thickness_nm must be positive");
  const std::string model = cfg.get(section, "model");
  DielectricModel mat;
  if (model == "constant") {
    mat = ConstantIndex{cfg.get_double(section, "n")};
  } else if (model == "lorentz") {
    mat = LorentzParams{cfg.get_double(section, "n0"), cfg.get_double(section, "f_ev2"),
                        cfg.get_double(section, "Ex_ev"), cfg.get_double(section, "gamma_ev")};
  } else if (model == "drude") {
    mat = DrudeParams{cfg.get_double_or(section, "eps_inf", 5.0),
                      cfg.get_double_or(section, "Ep_ev", 9.0),
                      cfg.get_double_or(section, "Gamma_ev", 0.07)};
  } else if (model == "tabulated") {
    std::filesystem::path csv = cfg.get(section, "csv");
    if (csv.is_relative()) csv = base_dir / csv;
    std::ifstream in(csv);
    if (!in)
      throw ConfigError(cfg.at_line(cfg.line_of(section, "csv")) + ": cannot open optics table " +
                        csv.string());
    try {
      mat = load_tabulated_csv(in);
    } catch (const std::exception& e) {
      throw ConfigError(cfg.at_line(cfg.line_of(section, "csv")) + ": " + e.what());
    }
  } else {
    throw ConfigError(cfg.at_line(cfg.line_of(section, "model")) + ": unknown material model '" +
                      model + "'");
  }
  return {thickness, mat};
}

inline LayerStack stack_from_config(const Config& cfg, const std::filesystem::path& base_dir) {
  LayerStack stack;
  stack.incidence_medium = ConstantIndex{cfg.get_double_or("stack", "incidence_n", 1.5)};
  stack.exit_medium = ConstantIndex{cfg.get_double_or("stack", "exit_n", 1.0)};
  for (const std::string& name : cfg.get_words("stack", "layers")) {
    auto [thickness, mat] = material_from_config(cfg, name, base_dir);
    stack.layers.push_back({thickness, std::move(mat)});
  }
  if (stack.layers.empty())
    throw ConfigError(cfg.at_line(cfg.line_of("stack", "layers")) + ": no layers listed");
  return stack;
}

inline std::vector<double> linspace(double lo, double hi, long n) {
  if (n < 1) throw std::invalid_argument("linspace: need at least one point");
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n));
  if (n == 1) {
    v.push_back(lo);
    return v;
  }
  for (long i = 0; i < n; ++i)
    v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return v;
}

inline std::pair<std::vector<double>, std::vector<double>> grids_from_config(const Config& cfg) {
  const double e0 = cfg.get_double("grid", "energy_min_ev");
  const double e1 = cfg.get_double("grid", "energy_max_ev");
  const long ne = cfg.get_int("grid", "energy_points");
  const double k0 = cfg.get_double_or("grid", "kx_min_um", 0.0);
  const double k1 = cfg.get_double("grid", "kx_max_um");
  const long nk = cfg.get_int("grid", "kx_points");
  if (!(e0 < e1) || ne < 1)
    throw ConfigError(cfg.at_line(cfg.line_of("grid", "energy_min_ev")) +
                      ": energy grid must have energy_min_ev < energy_max_ev and points >= 1");
  if (!(k0 <= k1) || nk < 1 || k0 < 0.0)
    throw ConfigError(cfg.at_line(cfg.line_of("grid", "kx_max_um")) +
                      ": kx grid must satisfy 0 <= kx_min_um <= kx_max_um and points >= 1");
  return {linspace(e0, e1, ne), (k0 == k1) ? std::vector<double>{k0} : linspace(k0, k1, nk)};
}

}  // namespace cavpol
