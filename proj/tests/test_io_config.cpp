#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "photonchain/config.hpp"
#include "photonchain/errors.hpp"
#include "photonchain/io.hpp"
#include "photonchain/records.hpp"
#include "support/generators.hpp"

using namespace photonchain;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("photonchain_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

temporal::TraceMatrix random_traces(testgen::Gen& gen, const temporal::TraceGrid& grid, std::size_t rows) {
  temporal::TraceMatrix m(grid);
  for (std::size_t r = 0; r < rows; ++r) {
    auto v = gen.vector(grid.n_samples, gen.uniform(1e-6, 1e3));
    m.append(v);
  }
  return m;
}

}  // namespace

TEST_CASE("number formatting round-trips every double") {
  testgen::for_cases(2000, 5, [](testgen::Gen& gen, int) {
    const double v = gen.normal() * std::pow(10.0, gen.integer(-300, 300));
    REQUIRE(io::parse_double(io::format_double(v)) == v);
  });
  CHECK(io::format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isnan(io::parse_double(io::format_double(std::nan("")))));
  CHECK_THROWS_AS(io::parse_double("1.5x"), DataError);
}

TEST_CASE("trace files round-trip losslessly in both formats") {
  TempDir dir("traces");
  testgen::for_cases(4, 9, [&](testgen::Gen& gen, int i) {
    const temporal::TraceGrid grid(gen.uniform(0.005, 0.05), static_cast<std::size_t>(gen.integer(1, 300)),
                                   gen.uniform(0.0, 30.0));
    const auto traces = random_traces(gen, grid, static_cast<std::size_t>(gen.integer(1, 20)));
    for (auto format : {io::TraceFormat::csv, io::TraceFormat::binary}) {
      const auto path = dir.path / ("t" + std::to_string(i) + (format == io::TraceFormat::csv ? ".csv" : ".iptrc"));
      CHECK(io::trace_format_for(path) == format);
      io::write_traces(path, traces, format);
      const auto back = io::read_traces(path, grid.t0_us);
      REQUIRE(back.rows() == traces.rows());
      CHECK(back.grid().dt_us == grid.dt_us);
      CHECK(back.grid().n_samples == grid.n_samples);
      CHECK(back.grid().t0_us == grid.t0_us);
      CHECK(std::ranges::equal(back.data(), traces.data()));
      const auto info = io::read_trace_header(path, grid.t0_us);
      CHECK(info.format == format);
      if (format == io::TraceFormat::binary) CHECK(info.n_trials == traces.rows());
    }
  });
}

TEST_CASE("binary trace layout") {
  TempDir dir("layout");
  const temporal::TraceGrid grid(0.25, 2, 0.0);
  {
    io::TraceWriter w(dir.path / "x.iptrc", grid, io::TraceFormat::binary);
    w.write(std::vector<double>{1.0, -2.0});
    CHECK_THROWS_AS(w.write(std::vector<double>{1.0}), DataError);
  }
  const auto bytes = slurp(dir.path / "x.iptrc");
  REQUIRE(bytes.size() == 6 + 4 + 4 + 8 + 16);
  CHECK(bytes.substr(0, 6) == "IPTRC1");
  CHECK(static_cast<unsigned char>(bytes[6]) == 1);  // n_trials, little-endian
  CHECK(static_cast<unsigned char>(bytes[10]) == 2);  // n_samples
  double dt = 0.0;
  std::memcpy(&dt, bytes.data() + 14, 8);
  CHECK(dt == 0.25);

  std::ofstream(dir.path / "bad.iptrc", std::ios::binary) << "NOTRC1xxxx";
  CHECK_THROWS_AS(io::read_traces(dir.path / "bad.iptrc"), DataError);
  std::ofstream(dir.path / "short.iptrc", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(io::read_traces(dir.path / "short.iptrc"), DataError);
  CHECK_THROWS_AS(io::read_traces(dir.path / "absent.iptrc"), IoError);
  std::ofstream(dir.path / "plain.csv") << "1,2,3\n";
  CHECK_THROWS_AS(io::read_traces(dir.path / "plain.csv"), DataError);
}

TEST_CASE("tables and typed files round-trip") {
  TempDir dir("tables");
  io::Table t{{"a[V]", "b"}, {{1.0, 2.5}, {-3.0, 1e-300}}};
  io::write_table(dir.path / "t.csv", t);
  const auto back = io::read_table(dir.path / "t.csv");
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK(back.column("b") == 1);
  CHECK_THROWS_AS(back.column("c"), DataError);
  CHECK_THROWS_AS(io::read_table(dir.path / "nope.csv"), IoError);

  const tomography::QuadratureDataset q{{0.1, -0.7, 1.0 / 3.0}, false, "s"};
  io::write_quadratures(dir.path / "q.csv", q);
  const auto qb = io::read_quadratures(dir.path / "q.csv");
  CHECK(qb.values == q.values);
  CHECK_FALSE(qb.calibrated);
  io::write_quadratures(dir.path / "qc.csv", {{0.5}, true, "s"});
  CHECK(io::read_quadratures(dir.path / "qc.csv").calibrated);

  const std::vector<characterization::ThermalSweepPoint> sweep{{20.0, 79.0, 0.53, 100.1}, {25.0, 900.0, 3.26, 7.0}};
  io::write_thermal_sweep(dir.path / "s.csv", sweep);
  const auto sb = io::read_thermal_sweep(dir.path / "s.csv");
  REQUIRE(sb.size() == 2);
  CHECK(sb[1].temperature_mk == 900.0);
  CHECK(sb[0].s_out == 100.1);

  const std::vector<characterization::DephasingPoint> deph{{17.0, 41.0, 2.0}, {29.0, 75.6, 3.8}};
  io::write_dephasing(dir.path / "d.csv", deph);
  const auto db = io::read_dephasing(dir.path / "d.csv");
  REQUIRE(db.size() == 2);
  CHECK(db[1].gamma_khz == 75.6);
  CHECK(db[1].sigma_khz == 3.8);

  const temporal::TraceGrid grid(0.01, 4, -1.0);
  const std::vector<double> wave{0.0, 1.0, 0.5, 0.25};
  io::write_waveform(dir.path / "w.csv", grid, wave);
  temporal::TraceGrid g2;
  CHECK(io::read_waveform(dir.path / "w.csv", g2) == wave);
  CHECK(g2.n_samples == 4);
  CHECK(g2.dt_us == doctest::Approx(0.01));
  CHECK(g2.t0_us == doctest::Approx(-1.0));
}

TEST_CASE("config defaults and resolved round trip") {
  const auto c = config::from_json(json::object());
  CHECK(c.seed == 7);
  CHECK(c.chain.g_jpa_db == 29.0);
  CHECK(c.protocol.kappa_out_khz == 300.0);
  CHECK(c.simulation.sets == 8);
  CHECK(c.simulation.trials_per_set == 7000);
  CHECK(c.characterization.sweep_temperatures_mk.size() == 40);
  CHECK(c.characterization.sweep_temperatures_mk.front() == 79.0);
  CHECK(c.characterization.sweep_temperatures_mk.back() == doctest::Approx(900.0));
  CHECK(sim::expected_retention(c.protocol) == doctest::Approx(0.94 * 0.74));
  CHECK(c.mode_params().jpa_bandwidth_mhz == doctest::Approx(43.0 / std::sqrt(794.328234724282)));

  const auto resolved = config::to_json(c);
  const auto again = config::from_json(resolved);
  CHECK(config::to_json(again) == resolved);
  CHECK(config::config_hash(again) == config::config_hash(c));
  CHECK(config::config_hash(c).size() == 16);

  auto changed = c;
  changed.seed = 8;
  CHECK(config::config_hash(changed) != config::config_hash(c));

  json custom = {{"protocol", {{"t1_qubit_us", "inf"}, {"kappa_out_khz", 310.0}}},
                 {"mode", {{"params", {{"rise_time_ns", 100.0}, {"decay_rate_khz", 400.0}, {"jpa_bandwidth_mhz", "inf"}}}}}};
  const auto cc = config::from_json(custom);
  CHECK(std::isinf(cc.protocol.t1_qubit_us));
  CHECK(cc.protocol.kappa_out_khz == 310.0);
  CHECK(std::isinf(cc.mode_params().jpa_bandwidth_mhz));
  CHECK(config::to_json(config::from_json(config::to_json(cc))) == config::to_json(cc));
}

TEST_CASE("config schema violations name the offending path") {
  const auto path_of = [](const json& doc) {
    try {
      config::from_json(doc);
    } catch (const ConfigError& e) {
      return e.path();
    }
    return std::string("<accepted>");
  };
  CHECK(path_of({{"sed", 1}}) == "sed");
  CHECK(path_of({{"chain", {{"g_jpa_db", "high"}}}}) == "chain.g_jpa_db");
  CHECK(path_of({{"chain", {{"g_jpa", 29}}}}) == "chain.g_jpa");
  CHECK(path_of({{"chain", {{"g_jpa_db", 45.0}}}}) == "chain");
  CHECK(path_of({{"seed", -3}}) == "seed");
  CHECK(path_of({{"timing", {{"readouts", {{1.0}}}}}}) == "timing.readouts[0]");
  CHECK(path_of({{"characterization", {{"sweep_gains_db", {20, "x"}}}}}) == "characterization.sweep_gains_db[1]");
  CHECK(path_of({{"mode", {{"params", {{"rise_time_ns", 1.0}, {"oops", 2}}}}}}) == "mode.params.oops");
  CHECK(path_of({{"simulation", {{"trace_format", "hdf5"}}}}) == "simulation.trace_format");
  CHECK(path_of({{"tomography", {{"method", "bayes"}}}}) == "tomography.method");
  CHECK(path_of({{"protocol", {{"kappa_out_khz", 500.0}}}}) == "protocol");
  CHECK(path_of(json::array()) == "<root>");

  TempDir dir("config");
  CHECK_THROWS_AS(config::load(dir.path / "missing.json"), IoError);
  std::ofstream(dir.path / "broken.json") << "{ \"seed\": ";
  CHECK_THROWS_AS(config::load(dir.path / "broken.json"), ConfigError);
  std::ofstream(dir.path / "ok.json") << "{ \"seed\": 11 }";
  CHECK(config::load(dir.path / "ok.json").seed == 11);
}

TEST_CASE("records round-trip") {
  testgen::for_cases(10, 13, [](testgen::Gen& gen, int) {
    auto rho = gen.density(gen.integer(0, 6));
    const auto back = records::density_matrix_from(records::density_matrix(rho));
    CHECK(std::vector<double>(back.populations().begin(), back.populations().end()) ==
          std::vector<double>(rho.populations().begin(), rho.populations().end()));
  });

  const fock::DiagonalDensityMatrix a({0.6, 0.35, 0.05, 0.0}), b({0.62, 0.33, 0.05, 0.0});
  tomography::ReconstructionResult r{a, b, {0.01, 0.005, 0.001, 0.0}, {0.6, 0.33, 0.05, 0.0}, {0.62, 0.35, 0.05, 0.0},
                                     {a, b}, {b, a}, {{1.5, 0.25, tomography::CalibrationAssumption::squeezed}},
                                     2, 0.04};
  const auto j = records::reconstruction(r);
  const auto rb = records::reconstruction_from(json::parse(j.dump()));
  CHECK(rb.stat_err == r.stat_err);
  CHECK(rb.sys_hi == r.sys_hi);
  CHECK(rb.per_set_amplified.size() == 2);
  CHECK(rb.calibrations[0].apparatus_gain == 1.5);
  CHECK(rb.nbar_backaction == 0.04);
  CHECK(records::reconstruction(rb) == j);
  CHECK(j.at("g2").at("value").is_number());
  CHECK_THROWS_AS(records::reconstruction_from(json{{"rho", records::density_matrix(a)}}), DataError);

  const temporal::TemporalModeParams p{150.0, 410.0, std::numeric_limits<double>::infinity()};
  const auto pb = records::mode_params_from(records::mode_params(p));
  CHECK(std::isinf(pb.jpa_bandwidth_mhz));
  CHECK(pb.rise_time_ns == 150.0);

  characterization::BackactionModel m;
  m.isolation_l = 2.1e-4;
  m.gamma0_khz = 40.0;
  m.covariance = {{{1e-10, 1e-6}, {1e-6, 4.0}}};
  m.residuals = {{17.0, 41.0, 40.9}};
  const auto mb = records::backaction_model_from(records::backaction_model(m));
  CHECK(mb.isolation_l == m.isolation_l);
  CHECK(mb.covariance == m.covariance);
  CHECK(mb.residuals.size() == 1);

  characterization::AddedNoiseModel n;
  n.n_jpa = 0.39;
  n.n_hemt = 18.0;
  n.covariance = {{{9e-4, 0.0}, {0.0, 25.0}}};
  n.per_gain = {{20.0, 100.0, 1.0, 0.57, 0.02, {}}};
  const auto nb = records::added_noise_model_from(records::added_noise_model(n));
  CHECK(nb.n_hemt == 18.0);
  CHECK(nb.per_gain.at(0).n_add == 0.57);
}
