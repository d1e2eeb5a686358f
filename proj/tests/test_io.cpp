#include <catch2/catch_amalgamated.hpp>

#include <cavpol/config.hpp>
#include <cavpol/heatmap.hpp>
#include <cavpol/map_io.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cavpol;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "cavpol-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    REQUIRE(mkdtemp(buf.data()) != nullptr);
    path = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

DispersionMap sample_map() {
  DispersionMap m;
  m.energies_ev = {1.9871234567891234, 2.0123456789012345, 2.1 + 1.0 / 3.0};
  m.momenta_um = {0.0, 0.1, 7.0 / 3.0, 11.25};
  m.values = {{0.1, 0.2, 0.3, 0.4},
              {1.0 / 7.0, 0.5, 0.6, 1e-17},
              {0.9999999999999999, 0.0, 1.0 / 3.0, 0.25}};
  return m;
}

std::string file_contents(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t be32(const std::string& bytes, std::size_t off) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3]));
}

}  // namespace

TEST_CASE("Map CSV round-trips bit-exactly", "[io]") {
  const DispersionMap m = sample_map();
  std::stringstream ss;
  write_map_csv(ss, m);
  const DispersionMap back = read_map_csv(ss);
  CHECK(back.energies_ev == m.energies_ev);  // %.17g preserves doubles exactly
  CHECK(back.momenta_um == m.momenta_um);
  CHECK(back.values == m.values);
}

TEST_CASE("Map CSV reader rejects malformed input", "[io]") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_map_csv(in);
  };

  CHECK_THROWS_AS(read(""), std::invalid_argument);
  CHECK_THROWS_AS(read("energy_ev\\kx_um,0,1\n"), std::invalid_argument);  // no data rows
  CHECK_THROWS_AS(read("just_one_cell\n2.0,0.5\n"), std::invalid_argument);

  try {
    read("energy_ev\\kx_um,0,1\n1.9,0.1,0.2\n2.0,0.3\n");
    FAIL("ragged row accepted");
  } catch (const std::invalid_argument& e) {
    CHECK_THAT(e.what(), ContainsSubstring("line 3"));
  }

  try {
    read("energy_ev\\kx_um,0,1\n1.9,0.1,zap\n");
    FAIL("bad cell accepted");
  } catch (const std::invalid_argument& e) {
    CHECK_THAT(e.what(), ContainsSubstring("line 2"));
    CHECK_THAT(e.what(), ContainsSubstring("zap"));
  }

  CHECK_THROWS_WITH(read("energy_ev\\kx_um,0,1\n2.0,0.1,0.2\n1.9,0.3,0.4\n"),
                    ContainsSubstring("ascend"));
  CHECK_THROWS_WITH(read("energy_ev\\kx_um,1,0\n1.9,0.1,0.2\n"), ContainsSubstring("ascend"));
}

TEST_CASE("Sweep CSV layout", "[io]") {
  std::vector<SweepRow> rows(2);
  rows[0] = {700.0, "Decoupled", 155.5, {2.0695, 2.225}, ""};
  rows[1] = {710.0, "Error", 0.0, {}, "solver blew up"};
  std::ostringstream out;
  write_sweep_csv(out, rows);

  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "L_nm,regime,gap_meV,dip_centers_ev,error");

  REQUIRE(std::getline(in, line));
  const auto cells = detail::split_csv_line(line);
  REQUIRE(cells.size() == 5);
  CHECK(std::stod(cells[0]) == 700.0);
  CHECK(cells[1] == "Decoupled");
  CHECK(std::stod(cells[2]) == 155.5);
  const auto semi = cells[3].find(';');
  REQUIRE(semi != std::string::npos);
  CHECK(std::stod(cells[3].substr(0, semi)) == 2.0695);
  CHECK(std::stod(cells[3].substr(semi + 1)) == 2.225);
  CHECK(cells[4].empty());

  REQUIRE(std::getline(in, line));
  CHECK_THAT(line, ContainsSubstring("Error"));
  CHECK_THAT(line, ContainsSubstring("solver blew up"));
}

TEST_CASE("Stacked spectra CSV pads short columns", "[io]") {
  std::ostringstream out;
  write_stacked_spectra_csv(out, {1.9, 2.0, 2.1}, {400.0, 500.0},
                            {{0.125, 0.5, 0.75}, {0.25, 0.375}});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "energy_ev,400,500");
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  CHECK_THAT(line, ContainsSubstring("0.75"));
  CHECK(line.back() == ',');  // padded cell for the short column
}

TEST_CASE("Branch CSV marks truncated traces with empty cells", "[io]") {
  PolaritonBranches pb;
  pb.momenta_um = {0.0, 1.0, 2.0};
  pb.branches = {{"LP_3", {1.8, 1.85, 1.9}}, {"UP_4", {2.4, 2.45}}};
  std::ostringstream out;
  write_branches_csv(out, pb);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "kx_um,LP_3,UP_4");
  std::getline(in, line);
  CHECK(detail::split_csv_line(line).size() == 3);
  std::getline(in, line);
  std::getline(in, line);
  const auto last = detail::split_csv_line(line);
  REQUIRE(last.size() == 3);
  CHECK(last[2].empty());
}

TEST_CASE("Atomic write leaves no temporaries", "[io]") {
  TempDir tmp;
  const fs::path target = tmp.path / "maps" / "out.csv";
  atomic_write(target, [](std::ostream& out) { out << "hello\n"; });
  CHECK(file_contents(target) == "hello\n");

  atomic_write(target, [](std::ostream& out) { out << "replaced\n"; });
  CHECK(file_contents(target) == "replaced\n");

  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(target.parent_path())) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
}

TEST_CASE("Config parsing and typed access", "[io]") {
  std::istringstream in(
      "# reflectance run\r\n"
      "[stack]\r\n"
      "incidence_n = 1.5\n"
      "layers = mirror spacer mirror\n"
      "\n"
      "; alt comment style\n"
      "[grid]\n"
      "energy_points = 401\n"
      "energy_min_ev = 1.7\n"
      "energy_max_ev=2.5\n");
  const Config cfg = Config::parse(in, "run.ini");

  CHECK(cfg.has_section("stack"));
  CHECK(cfg.has("grid", "energy_points"));
  CHECK_FALSE(cfg.has("grid", "bogus"));
  CHECK(cfg.get("stack", "incidence_n") == "1.5");
  CHECK(cfg.get_double("grid", "energy_max_ev") == 2.5);
  CHECK(cfg.get_int("grid", "energy_points") == 401);
  CHECK(cfg.get_or("grid", "missing", "fallback") == "fallback");
  CHECK(cfg.get_double_or("grid", "kx_min_um", 0.25) == 0.25);
  CHECK(cfg.get_words("stack", "layers") ==
        std::vector<std::string>{"mirror", "spacer", "mirror"});
  CHECK(cfg.line_of("grid", "energy_max_ev") == 10);
}

TEST_CASE("Config errors carry file and line", "[io]") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in, "bad.ini");
  };

  CHECK_THROWS_WITH(parse("[stack\nx = 1\n"), ContainsSubstring("bad.ini:1"));
  CHECK_THROWS_WITH(parse("[s]\njust words\n"), ContainsSubstring("bad.ini:2"));
  CHECK_THROWS_WITH(parse("[s]\n= 3\n"), ContainsSubstring("empty key"));

  const Config cfg = parse("[grid]\npoints = many\nfraction = 1.5\n");
  CHECK_THROWS_AS(cfg.get("nowhere", "x"), ConfigError);
  CHECK_THROWS_WITH(cfg.get("grid", "absent"), ContainsSubstring("bad.ini:1"));
  CHECK_THROWS_WITH(cfg.get_double("grid", "points"), ContainsSubstring("bad.ini:2"));
  CHECK_THROWS_WITH(cfg.get_int("grid", "fraction"), ContainsSubstring("integer"));
}

TEST_CASE("Stack assembly from config", "[io]") {
  TempDir tmp;
  {
    std::ofstream csv(tmp.path / "glass.csv");
    csv << "energy_ev,n,k\n1.0,1.50,0.0\n3.0,1.52,0.0\n";
  }
  std::istringstream in(
      "[stack]\n"
      "layers = mirror film mirror\n"
      "[material.mirror]\n"
      "model = drude\n"
      "thickness_nm = 35\n"
      "[material.film]\n"
      "model = lorentz\n"
      "thickness_nm = 628\n"
      "n0 = 1.5\n"
      "f_ev2 = 0.037\n"
      "Ex_ev = 2.1\n"
      "gamma_ev = 0.034\n"
      "[material.substrate]\n"
      "model = tabulated\n"
      "thickness_nm = 1000\n"
      "csv = glass.csv\n");
  const Config cfg = Config::parse(in, "stack.ini");

  const LayerStack stack = stack_from_config(cfg, tmp.path);
  REQUIRE(stack.layers.size() == 3);
  CHECK(std::holds_alternative<DrudeParams>(stack.layers[0].material));
  CHECK(std::holds_alternative<LorentzParams>(stack.layers[1].material));
  CHECK(stack.layers[1].thickness_nm == 628.0);
  CHECK(std::get<ConstantIndex>(stack.incidence_medium).n == 1.5);  // default
  CHECK(std::get<ConstantIndex>(stack.exit_medium).n == 1.0);       // default

  // Tabulated material resolves its CSV relative to the config directory.
  const auto [thick, mat] = material_from_config(cfg, "substrate", tmp.path);
  CHECK(thick == 1000.0);
  CHECK(std::holds_alternative<TabulatedOptics>(mat));
}

TEST_CASE("Config schema violations", "[io]") {
  TempDir tmp;
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in, "schema.ini");
  };

  const Config undefined =
      parse("[stack]\nlayers = ghost\n");
  CHECK_THROWS_WITH(stack_from_config(undefined, tmp.path),
                    ContainsSubstring("undefined material 'ghost'"));

  const Config negative = parse(
      "[stack]\nlayers = m\n[material.m]\nmodel = constant\nthickness_nm = -5\nn = 1.5\n");
  CHECK_THROWS_WITH(stack_from_config(negative, tmp.path),
                    ContainsSubstring("schema.ini:5"));

  const Config unknown = parse(
      "[stack]\nlayers = m\n[material.m]\nmodel = wurlitzer\nthickness_nm = 5\n");
  CHECK_THROWS_WITH(stack_from_config(unknown, tmp.path),
                    ContainsSubstring("unknown material model"));

  const Config missing_csv = parse(
      "[stack]\nlayers = m\n[material.m]\nmodel = tabulated\nthickness_nm = 5\ncsv = nope.csv\n");
  CHECK_THROWS_WITH(stack_from_config(missing_csv, tmp.path),
                    ContainsSubstring("cannot open"));

  const Config empty_layers = parse("[stack]\nlayers =\n");
  CHECK_THROWS_WITH(stack_from_config(empty_layers, tmp.path),
                    ContainsSubstring("no layers"));
}

TEST_CASE("Grid construction from config", "[io]") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in, "grid.ini");
  };

  const Config cfg = parse(
      "[grid]\nenergy_min_ev = 1.7\nenergy_max_ev = 2.5\nenergy_points = 5\n"
      "kx_max_um = 12\nkx_points = 4\n");
  const auto [E, kx] = grids_from_config(cfg);
  REQUIRE(E.size() == 5);
  CHECK(E.front() == 1.7);
  CHECK(E.back() == 2.5);
  CHECK(E[1] == Catch::Approx(1.9));
  REQUIRE(kx.size() == 4);
  CHECK(kx.front() == 0.0);  // kx_min_um defaults to 0
  CHECK(kx.back() == 12.0);

  const Config point = parse(
      "[grid]\nenergy_min_ev = 1.7\nenergy_max_ev = 2.5\nenergy_points = 3\n"
      "kx_min_um = 4\nkx_max_um = 4\nkx_points = 1\n");
  CHECK(grids_from_config(point).second == std::vector<double>{4.0});

  const Config inverted = parse(
      "[grid]\nenergy_min_ev = 2.5\nenergy_max_ev = 1.7\nenergy_points = 3\n"
      "kx_max_um = 12\nkx_points = 4\n");
  CHECK_THROWS_AS(grids_from_config(inverted), ConfigError);
}

TEST_CASE("Fit job loading", "[io]") {
  TempDir tmp;
  {
    std::ofstream out(tmp.path / "target.csv");
    write_map_csv(out, sample_map());
  }

  SECTION("complete problem") {
    std::ofstream(tmp.path / "prob.json") << R"({
      "target_csv": "target.csv",
      "free": [{"name": "L", "init": 600.0, "lo": 500.0, "hi": 756.0}],
      "fixed": {"mirror": 40.0},
      "polarization": "TM",
      "weights": {"near_ex": {"Ex_ev": 2.1, "halfwidth_ev": 0.2, "factor": 5.0}},
      "multistart": {"restarts": 4, "seed": 99},
      "optimizer": {"max_iterations": 123, "tol_rel": 1e-8}
    })";
    const FitJob job = load_fit_job(tmp.path / "prob.json");
    CHECK(job.problem.target.energies_ev.size() == 3);
    REQUIRE(job.problem.free.size() == 1);
    CHECK(job.problem.free[0].name == "L");
    CHECK(job.problem.free[0].hi == 756.0);
    CHECK(job.problem.fixed.at("mirror") == 40.0);
    CHECK(job.problem.pol == Polarization::TM);
    REQUIRE_FALSE(job.problem.weights.empty());
    CHECK(job.problem.max_iterations == 123);
    CHECK(job.problem.tol_rel == 1e-8);
    CHECK(job.restarts == 4);
    CHECK(job.seed == 99);
  }

  SECTION("defaults") {
    std::ofstream(tmp.path / "plain.json") << R"({"target_csv": "target.csv"})";
    const FitJob job = load_fit_job(tmp.path / "plain.json");
    CHECK(job.problem.free.empty());
    CHECK(job.problem.pol == Polarization::TE);
    CHECK(job.problem.weights.empty());
    CHECK(job.problem.max_iterations == 500);
    CHECK(job.restarts == 0);
  }

  SECTION("failure modes") {
    std::ofstream(tmp.path / "nokey.json") << R"({"free": []})";
    CHECK_THROWS_WITH(load_fit_job(tmp.path / "nokey.json"),
                      ContainsSubstring("target_csv"));

    std::ofstream(tmp.path / "corrupt.json") << "{ not json";
    CHECK_THROWS_WITH(load_fit_job(tmp.path / "corrupt.json"),
                      ContainsSubstring("parse error"));

    std::ofstream(tmp.path / "badpol.json")
        << R"({"target_csv": "target.csv", "polarization": "TEM"})";
    CHECK_THROWS_AS(load_fit_job(tmp.path / "badpol.json"), std::invalid_argument);

    std::ofstream(tmp.path / "badinit.json") << R"({
      "target_csv": "target.csv",
      "free": [{"name": "L", "init": 900.0, "lo": 500.0, "hi": 756.0}]
    })";
    CHECK_THROWS_AS(load_fit_job(tmp.path / "badinit.json"), std::invalid_argument);

    CHECK_THROWS_WITH(load_fit_job(tmp.path / "missing.json"),
                      ContainsSubstring("cannot open"));
  }
}

TEST_CASE("JSON serializers expose the expected fields", "[io]") {
  const DielectricModel lorentz = LorentzParams{};
  const auto jm = material_to_json(lorentz);
  CHECK(jm.at("model") == "lorentz");
  CHECK(jm.at("f_ev2") == 0.037);

  DipSet dips{{2.1, 0.2, 0.5, 0.03}};
  const auto jd = dipset_to_json(dips);
  REQUIRE(jd.size() == 1);
  CHECK(jd[0].at("center_ev") == 2.1);
  CHECK(jd[0].at("fwhm_ev") == 0.03);

  RegimeLabel label;
  label.regime = Regime::Decoupled;
  label.gap_ev = 0.05;
  label.centers_ev = {2.07, 2.12};
  const auto jr = regime_to_json(label);
  CHECK(jr.at("regime") == "Decoupled");
  CHECK(jr.at("centers_ev").size() == 2);

  FitResult res;
  res.fitted["L"] = 628.0;
  res.objective = 1e-14;
  res.iterations = 42;
  res.converged = true;
  const auto jf = fit_result_to_json(res);
  CHECK(jf.at("fitted").at("L") == 628.0);
  CHECK(jf.at("converged") == true);
}

TEST_CASE("Sidecar metadata describes map and stack", "[io]") {
  DispersionMap m = sample_map();
  m.defects.push_back({0, 3, "outside incidence cone"});
  LayerStack s;
  s.layers = {Layer{35.0, DrudeParams{}}, Layer{628.0, LorentzParams{}},
              Layer{35.0, DrudeParams{}}};
  const auto j = map_sidecar_json(m, s, Polarization::TE);
  CHECK(j.at("quantity_label") == "1-R");
  CHECK(j.at("polarization") == "TE");
  CHECK(j.at("stack").at("layers").size() == 3);
  CHECK(j.at("grid").at("n_energies") == 3);
  CHECK(j.at("grid").at("n_momenta") == 4);
  REQUIRE(j.at("defects").size() == 1);
  CHECK(j.at("defects")[0].at("momentum_index") == 3);
}

TEST_CASE("Heatmap PNG has the right dimensions", "[io]") {
  TempDir tmp;
  const DispersionMap m = sample_map();
  const fs::path png = tmp.path / "map.png";
  write_heatmap_png(png, m, 3);

  const std::string bytes = file_contents(png);
  REQUIRE(bytes.size() > 100);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x89);
  CHECK(bytes.substr(1, 3) == "PNG");
  CHECK(be32(bytes, 16) == m.momenta_um.size() * 3);   // width
  CHECK(be32(bytes, 20) == m.energies_ev.size() * 3);  // height

  std::size_t leftovers = 0;
  for (const auto& e : fs::directory_iterator(tmp.path))
    if (e.path().extension() != ".png") ++leftovers;
  CHECK(leftovers == 0);
}
