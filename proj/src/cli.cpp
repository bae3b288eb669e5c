#include "photonchain/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "photonchain/config.hpp"
#include "photonchain/errors.hpp"
#include "photonchain/io.hpp"
#include "photonchain/mode_optimizer.hpp"
#include "photonchain/records.hpp"
#include "photonchain/simulator.hpp"

namespace photonchain::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
namespace tomo = photonchain::tomography;
namespace chz = photonchain::characterization;

class MissingStageError : public std::runtime_error {
 public:
  explicit MissingStageError(std::vector<std::string> absent)
      : std::runtime_error(message(absent)), absent_(std::move(absent)) {}

 private:
  static std::string message(const std::vector<std::string>& absent) {
    std::string m = "missing stage outputs:";
    for (const auto& a : absent) m += "\n  " + a;
    return m;
  }
  std::vector<std::string> absent_;
};

struct CommonOptions {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> gain_db;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("-c,--config", o.config_path, "JSON run configuration (defaults if omitted)");
  sub->add_option("-o,--output-dir", o.output_dir, "Output directory (overrides the config)");
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--threads", o.threads, "Worker threads, 0 = all cores");
  sub->add_option("--gain-db", o.gain_db, "JPA gain in dB (overrides the config)");
}

config::RunConfig load_config(const CommonOptions& o) {
  config::RunConfig cfg = o.config_path.empty() ? config::from_json(json::object()) : config::load(o.config_path);
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.gain_db) {
    cfg.chain.g_jpa_db = *o.gain_db;
    try {
      cfg.chain.validate();
    } catch (const DomainError& e) {
      throw ConfigError("chain.g_jpa_db", e.what());
    }
  }
  return cfg;
}

std::string gain_tag(double gain_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "g%gdB", gain_db);
  return buf;
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << doc.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Collects outputs and timings of one stage and writes the manifest.
class Stage {
 public:
  Stage(const config::RunConfig& cfg, std::string name)
      : cfg_(cfg), name_(std::move(name)), dir_(cfg.output_dir), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
    const fs::path resolved = dir_ / "config.resolved.json";
    write_json(resolved, config::to_json(cfg_));
    add_output(resolved);
  }

  const fs::path& dir() const noexcept { return dir_; }
  void add_output(const fs::path& p) { outputs_.push_back(p.lexically_relative(dir_).generic_string()); }
  json& extra() { return extra_; }

  template <typename Fn>
  auto timed(const std::string& label, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      Stage* self;
      std::string label;
      std::chrono::steady_clock::time_point t0;
      ~Record() {
        self->timings_[label] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } record{this, label, t0};
    return fn();
  }

  fs::path finish() {
    timings_["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"stage", name_},
              {"config_hash", config::config_hash(cfg_)},
              {"seed", cfg_.seed},
              {"version", kVersion},
              {"outputs", outputs_},
              {"timings_s", timings_}};
    for (const auto& [k, v] : extra_.items()) m[k] = v;
    const fs::path path = dir_ / ("manifest_" + name_ + ".json");
    write_json(path, m);
    return path;
  }

 private:
  const config::RunConfig& cfg_;
  std::string name_;
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  std::map<std::string, double> timings_;
  json extra_ = json::object();
};

// Modeling choices a reader of any output should see.
json model_flags(const config::RunConfig& cfg) {
  return {{"rejection_split",
           {{"decay_race_probability", cfg.protocol.decay_race_probability()},
            {"p_pulse_fail", cfg.protocol.p_pulse_fail},
            {"note", "split of the post-pulse rejection between qubit decay and pulse failure is a modeling choice"}}},
          {"kappa_out_khz", cfg.protocol.kappa_out_khz},
          {"escape_ratio", cfg.protocol.escape_ratio()},
          {"qubit_freq_ghz",
           {{"value", cfg.protocol.qubit_freq_ghz},
            {"note", "metadata only; two conflicting published values (3.495 and 4.385 GHz) exist"}}}};
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string kind;
  std::optional<std::size_t> sets;
  std::optional<std::size_t> trials;
  std::optional<std::string> format;
  bool holdout = false;
};

void simulate_traces(const config::RunConfig& cfg, const SimulateOptions& o, Stage& stage, std::ostream& out) {
  const auto kind = sim::trial_kind_from_string(o.kind);
  const std::size_t sets = o.sets.value_or(cfg.simulation.sets);
  const std::size_t trials = o.trials.value_or(cfg.simulation.trials_per_set);
  const auto format = io::trace_format_from_string(o.format.value_or(cfg.simulation.trace_format));
  const std::string ext = format == io::TraceFormat::binary ? ".iptrc" : ".csv";
  const sim::SimulationModel model(cfg.protocol, cfg.chain, cfg.timing, cfg.mode.explicit_params);

  json tallies = json::array();
  const auto run_one = [&](const std::string& label, std::uint64_t seed, std::size_t n) {
    const fs::path trace_path = stage.dir() / (o.kind + "_" + gain_tag(cfg.chain.g_jpa_db) + "_" + label + ext);
    const fs::path label_path =
        stage.dir() / (o.kind + "_" + gain_tag(cfg.chain.g_jpa_db) + "_" + label + "_labels.csv");
    io::TraceWriter writer(trace_path, cfg.timing.grid, format);
    io::Table labels{{"trial_index", "truth_emitted_n[photons]", "truth_quadrature[quanta^(1/2)]",
                      "qubit_decayed[bool]", "pulse_failed[bool]"},
                     {}};
    const auto summary = stage.timed("simulate_" + label, [&] {
      return sim::simulate_dataset(
          kind, n, model, seed,
          [&](std::size_t index, const sim::TrialRecord& rec) {
            if (!rec.retained()) return;
            writer.write(rec.trace.samples);
            labels.rows.push_back({static_cast<double>(index), static_cast<double>(rec.truth_emitted_n),
                                   rec.truth_quadrature, rec.qubit_decayed ? 1.0 : 0.0, rec.pulse_failed ? 1.0 : 0.0});
          },
          cfg.threads);
    });
    writer.close();
    io::write_table(label_path, labels);
    stage.add_output(trace_path);
    stage.add_output(label_path);
    tallies.push_back({{"set", label},
                       {"seed", seed},
                       {"trials", summary.n_trials},
                       {"retained", summary.retained},
                       {"rejected_initially_excited", summary.rejected_initially_excited},
                       {"rejected_qubit_decay", summary.rejected_qubit_decay},
                       {"rejected_pulse_failure", summary.rejected_pulse_failure}});
    out << o.kind << " " << label << ": " << summary.retained << "/" << summary.n_trials << " retained ("
        << summary.rejected_initially_excited << " initially excited, " << summary.rejected_qubit_decay
        << " qubit decay, " << summary.rejected_pulse_failure << " pulse failure)\n";
  };

  for (std::size_t k = 0; k < sets; ++k) {
    run_one("set" + std::to_string(k), substream_seed(cfg.seed, o.kind + "-set", k), trials);
  }
  if (o.holdout) run_one("holdout", substream_seed(cfg.seed, o.kind + "-holdout"), cfg.simulation.holdout_trials);
  stage.extra()["retention"] = tallies;
  stage.extra()["trace_format"] = io::to_string(format);
  stage.extra()["signal_mode"] = records::mode_params(model.signal_params());
}

int cmd_simulate(const CommonOptions& common, const SimulateOptions& o, std::ostream& out) {
  const auto cfg = load_config(common);
  Stage stage(cfg, "simulate_" + o.kind);
  stage.extra()["model_flags"] = model_flags(cfg);
  if (o.kind == "photon" || o.kind == "control") {
    simulate_traces(cfg, o, stage, out);
  } else if (o.kind == "thermal-sweep") {
    const auto& c = cfg.characterization;
    const auto points = stage.timed("simulate", [&] {
      return sim::simulate_thermal_sweep(c.sweep_temperatures_mk, c.sweep_gains_db, cfg.chain, c.sweep_scatter, cfg.seed,
                                         c.sweep_frequency_ghz);
    });
    const fs::path path = stage.dir() / "thermal_sweep.csv";
    io::write_thermal_sweep(path, points);
    stage.add_output(path);
    out << "thermal sweep: " << points.size() << " points\n";
  } else if (o.kind == "dephasing") {
    const auto& c = cfg.characterization;
    const auto points = stage.timed("simulate", [&] {
      return sim::simulate_dephasing_data(c.dephasing_gains_db, cfg.chain.isolation_l, c.gamma0_khz,
                                          cfg.protocol.kappa_khz, c.dephasing_scatter, cfg.seed);
    });
    const fs::path path = stage.dir() / "dephasing.csv";
    io::write_dephasing(path, points);
    stage.add_output(path);
    out << "dephasing: " << points.size() << " points\n";
  } else {
    throw ConfigError("kind", "expected photon, control, thermal-sweep or dephasing");
  }
  out << "manifest: " << stage.finish().string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------- reconstruct

struct ReconstructOptions {
  std::vector<std::string> photon;
  std::vector<std::string> control;
  bool mode_optimize = false;
  std::string holdout_photon;
  std::string holdout_control;
  std::string characterization;
  bool emit_plots = false;
};

void require_files(const std::vector<std::string>& paths) {
  std::vector<std::string> absent;
  for (const auto& p : paths) {
    if (!fs::exists(p)) absent.push_back(p);
  }
  if (!absent.empty()) {
    std::string m = "input files not found:";
    for (const auto& a : absent) m += " " + a;
    throw IoError(m);
  }
}

void check_grid(const temporal::TraceGrid& file, const temporal::TraceGrid& expected, const std::string& path) {
  if (!(file == expected)) {
    throw DataError("grid mismatch between mode and traces in " + path + " (file dt=" + io::format_double(file.dt_us) +
                    " n=" + std::to_string(file.n_samples) + ", mode dt=" + io::format_double(expected.dt_us) +
                    " n=" + std::to_string(expected.n_samples) + ")");
  }
}

tomo::QuadratureDataset extract_file(const std::string& path, const temporal::QuadratureExtractor& extractor,
                                     const config::RunConfig& cfg) {
  check_grid(io::read_trace_header(path, cfg.timing.grid.t0_us).grid, extractor.grid(), path);
  tomo::QuadratureDataset d;
  d.set_id = fs::path(path).stem().string();
  io::for_each_trace(path, [&](std::span<const double> trace) { d.values.push_back(extractor(trace)); },
                     cfg.timing.grid.t0_us);
  if (d.values.empty()) throw EmptyDatasetError("no traces in " + path);
  return d;
}

int cmd_reconstruct(const CommonOptions& common, const ReconstructOptions& o, std::ostream& out) {
  const auto cfg = load_config(common);
  require_files(o.photon);
  require_files(o.control);
  if (o.photon.size() != o.control.size()) {
    throw PairingError("photon and control file counts differ (" + std::to_string(o.photon.size()) + " vs " +
                       std::to_string(o.control.size()) + ")");
  }
  Stage stage(cfg, "reconstruct_" + gain_tag(cfg.chain.g_jpa_db));
  const auto& grid = cfg.timing.grid;
  const auto window = temporal::background_window(grid, cfg.timing.readouts);

  temporal::TemporalModeParams params = cfg.mode_params();
  json mode_record = {{"initial", records::mode_params(params)}, {"optimized", false}};
  if (o.mode_optimize) {
    if (o.holdout_photon.empty() || o.holdout_control.empty()) {
      throw ConfigError("--mode-optimize", "needs --holdout-photon and --holdout-control");
    }
    require_files({o.holdout_photon, o.holdout_control});
    const auto hp = io::read_traces(o.holdout_photon, grid.t0_us);
    const auto hc = io::read_traces(o.holdout_control, grid.t0_us);
    check_grid(hp.grid(), grid, o.holdout_photon);
    check_grid(hc.grid(), grid, o.holdout_control);
    temporal::ModeOptimizationOptions mo;
    mo.n_max = cfg.tomography.n_max;
    mo.max_iterations = cfg.mode.optimizer_max_iterations;
    mo.f_tolerance = cfg.mode.optimizer_tolerance;
    mo.support = cfg.timing.photon_window;
    mo.threads = cfg.threads;
    temporal::ModeOptimizationResult result;
    bool converged = true;
    stage.timed("mode_optimization", [&] {
      try {
        result = temporal::optimize_mode(hp, hc, params, window, mo);
      } catch (const temporal::ModeConvergenceError& e) {
        result = e.best();
        converged = false;
      }
      return 0;
    });
    params = result.params;
    out << "optimized mode: rise_time_ns=" << params.rise_time_ns << " decay_rate_khz=" << params.decay_rate_khz
        << " jpa_bandwidth_mhz=" << params.jpa_bandwidth_mhz << " rho00=" << result.rho00
        << (converged ? "" : " (iteration cap reached)") << '\n';
    mode_record["optimized"] = true;
    mode_record["converged"] = converged;
    mode_record["rho00"] = result.rho00;
    mode_record["iterations"] = result.iterations;
    mode_record["evaluations"] = result.evaluations;
  }
  mode_record["params"] = records::mode_params(params);

  const auto mode = temporal::mode_shape(params, grid, cfg.timing.photon_window);
  const temporal::QuadratureExtractor extractor(mode, window);

  std::vector<tomo::QuadratureDataset> photon_sets, control_sets;
  stage.timed("extraction", [&] {
    for (const auto& p : o.photon) photon_sets.push_back(extract_file(p, extractor, cfg));
    for (const auto& p : o.control) control_sets.push_back(extract_file(p, extractor, cfg));
    return 0;
  });
  const fs::path qdir = stage.dir() / ("quadratures_" + gain_tag(cfg.chain.g_jpa_db));
  for (const auto* sets : {&photon_sets, &control_sets}) {
    for (const auto& d : *sets) {
      const fs::path p = qdir / (d.set_id + ".csv");
      io::write_quadratures(p, d);
      stage.add_output(p);
    }
  }

  fock::ThermalOccupation nbar = cfg.chain.backaction();
  std::string nbar_source = "config";
  if (!o.characterization.empty()) {
    require_files({o.characterization});
    const auto doc = read_json(o.characterization);
    if (!doc.contains("backaction")) throw DataError("characterization record lacks 'backaction'");
    nbar = chz::nbar_from_gain(records::backaction_model_from(doc["backaction"]), cfg.chain.g_jpa_db);
    nbar_source = o.characterization;
  }

  const auto result = stage.timed("tomography", [&] {
    return tomo::reconstruct_with_errors(photon_sets, control_sets, cfg.tomography.n_max, nbar, cfg.fit_options(),
                                         cfg.threads);
  });

  json record = records::reconstruction(result);
  record["gain_db"] = cfg.chain.g_jpa_db;
  record["nbar_source"] = nbar_source;
  record["mode"] = mode_record;
  record["model_flags"] = model_flags(cfg);
  const fs::path rec_path = stage.dir() / ("reconstruction_" + gain_tag(cfg.chain.g_jpa_db) + ".json");
  write_json(rec_path, record);
  stage.add_output(rec_path);

  if (o.emit_plots) {
    std::vector<double> pooled;
    for (std::size_t k = 0; k < photon_sets.size(); ++k) {
      const auto cal = tomo::apply_calibration(photon_sets[k], result.calibrations[k]);
      pooled.insert(pooled.end(), cal.values.begin(), cal.values.end());
    }
    const auto hist = tomo::freedman_diaconis_histogram(pooled);
    const fs::path hpath = stage.dir() / ("histogram_" + gain_tag(cfg.chain.g_jpa_db) + ".csv");
    io::write_histogram(hpath, hist, tomo::model_bin_density(hist, result.rho));
    const fs::path mpath = stage.dir() / ("mode_" + gain_tag(cfg.chain.g_jpa_db) + ".csv");
    io::write_waveform(mpath, grid, mode.samples());
    const fs::path wpath = stage.dir() / "window.csv";
    io::write_waveform(wpath, grid, window.samples());
    for (const auto& p : {hpath, mpath, wpath}) stage.add_output(p);
  }

  const auto& rho = result.rho;
  out << "rho (" << result.n_sets << " sets, nbar=" << nbar.nbar << "):";
  for (int n = 0; n <= rho.n_max(); ++n) {
    out << " p" << n << "=" << rho[n] << "+-" << result.stat_err[static_cast<std::size_t>(n)];
  }
  out << "\nreport: " << rec_path.string() << "\nmanifest: " << stage.finish().string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------ characterize

struct CharacterizeOptions {
  std::string dephasing;
  std::string thermal_sweep;
};

json curves(const config::RunConfig& cfg, const chz::BackactionModel& back, const chz::EfficiencyCurve& curve,
            io::Table& eff_table, io::Table& nbar_table) {
  json eff = json::array();
  for (const auto& p : curve.sample(1.0)) {
    eff.push_back({{"gain_db", p.gain_db}, {"eta", p.eta}, {"eta_err", p.eta_err}});
    eff_table.rows.push_back({p.gain_db, p.eta, p.eta_err});
  }
  json nb = json::array();
  for (double g = cfg.characterization.curve_min_gain_db; g <= cfg.characterization.curve_max_gain_db + 1e-9;
       g += 1.0) {
    const double v = chz::nbar_from_gain(back, g).nbar;
    const double e = chz::nbar_error(back, g);
    nb.push_back({{"gain_db", g}, {"nbar", v}, {"nbar_err", e}});
    nbar_table.rows.push_back({g, v, e});
  }
  return {{"efficiency_curve", eff}, {"nbar_curve", nb}};
}

int cmd_characterize(const CommonOptions& common, const CharacterizeOptions& o, std::ostream& out) {
  const auto cfg = load_config(common);
  const fs::path dir(cfg.output_dir);
  const fs::path deph = o.dephasing.empty() ? dir / "dephasing.csv" : fs::path(o.dephasing);
  const fs::path sweep = o.thermal_sweep.empty() ? dir / "thermal_sweep.csv" : fs::path(o.thermal_sweep);
  std::vector<std::string> absent;
  for (const auto& p : {deph, sweep}) {
    if (!fs::exists(p)) absent.push_back(p.string());
  }
  if (!absent.empty()) throw MissingStageError(absent);

  Stage stage(cfg, "characterize");
  const auto back = stage.timed("dephasing_fit",
                                [&] { return chz::fit_dephasing(io::read_dephasing(deph), cfg.protocol.kappa_khz); });
  const auto noise = stage.timed("noise_fit", [&] {
    return chz::fit_added_noise_model(chz::fit_thermal_sweep(io::read_thermal_sweep(sweep)));
  });
  const auto curve =
      chz::efficiency_curve(noise, cfg.characterization.curve_min_gain_db, cfg.characterization.curve_max_gain_db);

  io::Table eff_table{{"gain[dB]", "eta", "eta_err"}, {}};
  io::Table nbar_table{{"gain[dB]", "nbar[photons]", "nbar_err[photons]"}, {}};
  json doc = curves(cfg, back, curve, eff_table, nbar_table);
  doc["backaction"] = records::backaction_model(back);
  doc["added_noise"] = records::added_noise_model(noise);
  doc["curve_range_db"] = {curve.min_gain_db(), curve.max_gain_db()};
  doc["inputs"] = {{"dephasing", deph.string()}, {"thermal_sweep", sweep.string()}};

  const fs::path char_path = dir / "characterization.json";
  write_json(char_path, doc);
  const fs::path eff_path = dir / "efficiency_curve.csv";
  const fs::path nbar_path = dir / "nbar_curve.csv";
  const fs::path deph_res = dir / "dephasing_residuals.csv";
  io::write_table(eff_path, eff_table);
  io::write_table(nbar_path, nbar_table);
  io::write_residuals(deph_res, back.residuals, "gain[dB]", "gamma[kHz]");
  for (const auto& p : {char_path, eff_path, nbar_path, deph_res}) stage.add_output(p);
  for (const auto& g : noise.per_gain) {
    const fs::path p = dir / ("thermal_sweep_residuals_" + gain_tag(g.gain_db) + ".csv");
    io::write_residuals(p, g.residuals, "s_in[quanta]", "s_out[arb]");
    stage.add_output(p);
  }

  out << "L = " << back.isolation_l << " +- " << back.isolation_err() << ", gamma0 = " << back.gamma0_khz << " +- "
      << back.gamma0_err() << " kHz\n"
      << "N_JPA = " << noise.n_jpa << ", N_HEMT = " << noise.n_hemt
      << (noise.at_or_above_quantum_limit() ? "" : " (N_JPA below the phase-sensitive quantum limit)") << '\n'
      << "manifest: " << stage.finish().string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportOptions {
  std::vector<std::string> reconstructions;
  std::string characterization;
};

int cmd_report(const CommonOptions& common, const ReportOptions& o, std::ostream& out) {
  const auto cfg = load_config(common);
  const fs::path dir(cfg.output_dir);
  std::vector<std::string> recs = o.reconstructions;
  if (recs.empty() && fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("reconstruction_", 0) == 0 && e.path().extension() == ".json") recs.push_back(e.path().string());
    }
    std::sort(recs.begin(), recs.end());
  }
  const fs::path char_path = o.characterization.empty() ? dir / "characterization.json" : fs::path(o.characterization);
  std::vector<std::string> absent;
  if (recs.empty()) absent.push_back((dir / "reconstruction_*.json").string());
  for (const auto& r : recs) {
    if (!fs::exists(r)) absent.push_back(r);
  }
  if (!fs::exists(char_path)) absent.push_back(char_path.string());
  if (!absent.empty()) throw MissingStageError(absent);

  Stage stage(cfg, "report");
  const json ch = read_json(char_path);
  if (!ch.contains("added_noise") || !ch.contains("backaction")) {
    throw DataError("characterization record lacks 'added_noise' or 'backaction'");
  }
  const auto noise = records::added_noise_model_from(ch["added_noise"]);
  const auto back = records::backaction_model_from(ch["backaction"]);
  const auto curve =
      chz::efficiency_curve(noise, cfg.characterization.curve_min_gain_db, cfg.characterization.curve_max_gain_db);

  std::vector<std::pair<double, json>> entries;
  io::Table table{{"gain[dB]", "eta", "eta_err", "nbar[photons]", "rho00", "rho11", "rho22", "rho11_stat",
                   "rho11_sys_lo", "rho11_sys_hi", "fidelity_ideal", "fidelity_ideal_stat", "fidelity_ideal_sys_lo",
                   "fidelity_ideal_sys_hi", "fidelity_expected", "fidelity_expected_stat",
                   "fidelity_expected_sys_lo", "fidelity_expected_sys_hi", "g2", "g2_stat", "g2_sys_lo", "g2_sys_hi"},
                  {}};
  for (const auto& path : recs) {
    const json rj = read_json(path);
    if (!rj.contains("gain_db")) throw DataError("reconstruction record lacks 'gain_db': " + path);
    const double gain = rj["gain_db"].get<double>();
    const auto rec = records::reconstruction_from(rj);
    const auto cmp = chz::compare_to_expectation(rec, cfg.protocol.kappa_khz, cfg.protocol.kappa_out_khz, curve, gain);
    json e = records::comparison(cmp);
    e["rho_measured"] = records::density_matrix(rec.rho);
    e["nbar"] = chz::nbar_from_gain(back, gain).nbar;
    e["nbar_err"] = chz::nbar_error(back, gain);
    e["source"] = fs::path(path).filename().string();
    entries.emplace_back(gain, e);
    const auto i1 = std::size_t{1};
    table.rows.push_back({gain, cmp.eta, cmp.eta_err, e["nbar"].get<double>(), rec.rho[0], rec.rho[1], rec.rho[2],
                          rec.stat_err.size() > i1 ? rec.stat_err[i1] : 0.0,
                          rec.sys_lo.size() > i1 ? rec.sys_lo[i1] : rec.rho[1],
                          rec.sys_hi.size() > i1 ? rec.sys_hi[i1] : rec.rho[1], cmp.fidelity_ideal.value,
                          cmp.fidelity_ideal.stat, cmp.fidelity_ideal.sys_lo, cmp.fidelity_ideal.sys_hi,
                          cmp.fidelity_expected.value, cmp.fidelity_expected.stat, cmp.fidelity_expected.sys_lo,
                          cmp.fidelity_expected.sys_hi, cmp.g2.value, cmp.g2.stat, cmp.g2.sys_lo, cmp.g2.sys_hi});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });

  json per_gain = json::array();
  for (auto& [g, e] : entries) per_gain.push_back(std::move(e));
  io::Table eff_table{{"gain[dB]", "eta", "eta_err"}, {}};
  io::Table nbar_table{{"gain[dB]", "nbar[photons]", "nbar_err[photons]"}, {}};
  json doc = curves(cfg, back, curve, eff_table, nbar_table);
  doc["per_gain"] = per_gain;
  doc["added_noise"] = {{"n_jpa", noise.n_jpa}, {"n_hemt", noise.n_hemt}};
  doc["backaction"] = {{"isolation_l", back.isolation_l}, {"gamma0_khz", back.gamma0_khz}};
  doc["model_flags"] = model_flags(cfg);

  const fs::path report_path = dir / "report.json";
  const fs::path table_path = dir / "report.csv";
  write_json(report_path, doc);
  io::write_table(table_path, table);
  stage.add_output(report_path);
  stage.add_output(table_path);

  for (const auto& row : table.rows) {
    out << row[0] << " dB: eta=" << row[1] << " rho11=" << row[5] << " F_ideal=" << row[10]
        << " F_expected=" << row[14] << " g2=" << row[18] << '\n';
  }
  out << "report: " << report_path.string() << "\nmanifest: " << stage.finish().string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heralded single-photon tomography and measurement-chain characterization toolkit", "photonchain"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOptions common;
  SimulateOptions sim_o;
  ReconstructOptions rec_o;
  CharacterizeOptions char_o;
  ReportOptions rep_o;

  auto* simulate = app.add_subcommand("simulate", "Simulate traces or characterization tables");
  add_common(simulate, common);
  simulate->add_option("--kind", sim_o.kind, "photon | control | thermal-sweep | dephasing")
      ->required()
      ->check(CLI::IsMember({"photon", "control", "thermal-sweep", "dephasing"}));
  simulate->add_option("--sets", sim_o.sets, "Number of trace sets");
  simulate->add_option("--trials", sim_o.trials, "Protocol iterations per set");
  simulate->add_option("--format", sim_o.format, "Trace file format")->check(CLI::IsMember({"csv", "binary"}));
  simulate->add_flag("--holdout", sim_o.holdout, "Also write a held-out set for mode optimization");

  auto* reconstruct = app.add_subcommand("reconstruct", "Extract, calibrate and fit paired trace sets");
  add_common(reconstruct, common);
  reconstruct->add_option("--photon", rec_o.photon, "Photon trace files")->required();
  reconstruct->add_option("--control", rec_o.control, "Control trace files")->required();
  reconstruct->add_flag("--mode-optimize", rec_o.mode_optimize, "Choose the mode on held-out files first");
  reconstruct->add_option("--holdout-photon", rec_o.holdout_photon, "Held-out photon traces");
  reconstruct->add_option("--holdout-control", rec_o.holdout_control, "Held-out control traces");
  reconstruct->add_option("--characterization", rec_o.characterization,
                          "characterization.json supplying the backaction model");
  reconstruct->add_flag("--emit-plots", rec_o.emit_plots, "Write histogram, mode and window CSVs");

  auto* characterize = app.add_subcommand("characterize", "Fit backaction and added-noise models");
  add_common(characterize, common);
  characterize->add_option("--dephasing", char_o.dephasing, "Dephasing table (default <out>/dephasing.csv)");
  characterize->add_option("--thermal-sweep", char_o.thermal_sweep,
                           "Thermal sweep table (default <out>/thermal_sweep.csv)");

  auto* report = app.add_subcommand("report", "Compare reconstructions with the characterized expectation");
  add_common(report, common);
  report->add_option("--reconstruction", rep_o.reconstructions,
                     "Reconstruction records (default <out>/reconstruction_*.json)");
  report->add_option("--characterization", rep_o.characterization,
                     "Characterization record (default <out>/characterization.json)");

  std::vector<std::string> argv_storage{"photonchain"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, sim_o, out);
    if (reconstruct->parsed()) return cmd_reconstruct(common, rec_o, out);
    if (characterize->parsed()) return cmd_characterize(common, char_o, out);
    if (report->parsed()) return cmd_report(common, rep_o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const MissingStageError& e) {
    err << e.what() << '\n';
    return kExitMissingStage;
  } catch (const DataError& e) {
    err << "data mismatch: " << e.what() << '\n';
    return kExitDataMismatch;
  } catch (const PairingError& e) {
    err << "data mismatch: " << e.what() << '\n';
    return kExitDataMismatch;
  } catch (const EmptyDatasetError& e) {
    err << "data mismatch: " << e.what() << '\n';
    return kExitDataMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace photonchain::cli
