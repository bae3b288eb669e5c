#include "photonchain/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "photonchain/errors.hpp"
#include "photonchain/random.hpp"

namespace photonchain::config {

using nlohmann::json;

namespace {

// Walks one JSON object, tracking the dotted path and the keys consumed.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  // JSON has no infinity; the string "inf" stands in for it.
  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_string() && *v == "inf") {
        out = std::numeric_limits<double>::infinity();
        return;
      }
      if (!v->is_number()) throw ConfigError(child(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v->is_number_unsigned()) throw ConfigError(child(key), "expected a non-negative integer");
      }
      out = v->get<Int>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(child(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  std::optional<Section> section(const std::string& key) {
    if (const json* v = find(key)) return Section(*v, child(key));
    return std::nullopt;
  }

  /// Throws on any key not consumed.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) throw ConfigError(child(key), "unknown key");
    }
  }

  const std::string& path() const noexcept { return path_; }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

std::array<double, 2> interval(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(path, "expected [start_us, stop_us]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

// Re-raise module validation failures with the section path.
template <typename Fn>
void validated(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
}

void read_protocol(Section s, RunConfig& c) {
  auto& p = c.protocol;
  p = sim::ProtocolConfig{};
  s.number("t1_qubit_us", p.t1_qubit_us);
  s.number("p_excited_init", p.p_excited_init);
  s.number("post_rejection", c.post_rejection);
  s.number("drive_duration_ns", p.drive_duration_ns);
  s.number("kappa_khz", p.kappa_khz);
  s.number("kappa_out_khz", p.kappa_out_khz);
  s.number("qubit_freq_ghz", p.qubit_freq_ghz);
  s.number("cavity_freq_ghz", p.cavity_freq_ghz);
  s.number("chi_mhz", p.chi_mhz);
  if (!(c.post_rejection >= 0.0 && c.post_rejection <= 1.0)) {
    throw ConfigError(s.child("post_rejection"), "must lie in [0, 1]");
  }
  const json* fail = s.find("p_pulse_fail");
  if (fail && !fail->is_null()) {
    if (!fail->is_number()) throw ConfigError(s.child("p_pulse_fail"), "expected a number or null");
    p.p_pulse_fail = fail->get<double>();
  } else {
    validated(s.path(), [&] {
      const double decay = p.decay_race_probability();
      p.p_pulse_fail = std::max(0.0, 1.0 - (1.0 - c.post_rejection) / (1.0 - decay));
    });
  }
  s.finish();
}

void read_chain(Section s, sim::ChainConfig& ch) {
  s.number("g_jpa_db", ch.g_jpa_db);
  s.number("n_jpa", ch.n_jpa);
  s.number("n_hemt", ch.n_hemt);
  s.number("isolation_l", ch.isolation_l);
  s.number("apparatus_gain", ch.apparatus_gain);
  s.number("dc_offset_v", ch.dc_offset_v);
  s.number("dc_drift_amplitude_v", ch.dc_drift_amplitude_v);
  s.number("dc_drift_time_us", ch.dc_drift_time_us);
  s.number("trial_period_us", ch.trial_period_us);
  s.number("readout_level_ground_v", ch.readout_level_ground_v);
  s.number("readout_level_excited_v", ch.readout_level_excited_v);
  s.number("gain_bandwidth_mhz", ch.gain_bandwidth_mhz);
  s.number("downstream_gain", ch.downstream_gain);
  s.finish();
}

void read_timing(Section s, sim::TimingConfig& t) {
  double dt = t.grid.dt_us;
  std::size_t n = t.grid.n_samples;
  double t0 = t.grid.t0_us;
  s.number("dt_us", dt);
  s.integer("n_samples", n);
  s.number("t0_us", t0);
  validated(s.path(), [&] { t.grid = temporal::TraceGrid(dt, n, t0); });
  if (const json* r = s.find("readouts")) {
    if (!r->is_array()) throw ConfigError(s.child("readouts"), "expected an array of intervals");
    t.readouts.clear();
    for (std::size_t i = 0; i < r->size(); ++i) {
      const auto iv = interval((*r)[i], s.child("readouts") + "[" + std::to_string(i) + "]");
      t.readouts.push_back({iv[0], iv[1]});
    }
  }
  if (const json* w = s.find("photon_window")) {
    const auto iv = interval(*w, s.child("photon_window"));
    t.photon_window = {iv[0], iv[1]};
  }
  s.finish();
}

void read_mode(Section s, ModeOptions& m) {
  const json* src = s.find("params");
  if (src && !src->is_null()) {
    Section ps(*src, s.child("params"));
    temporal::TemporalModeParams p;
    ps.number("rise_time_ns", p.rise_time_ns);
    ps.number("decay_rate_khz", p.decay_rate_khz);
    ps.number("jpa_bandwidth_mhz", p.jpa_bandwidth_mhz);
    ps.finish();
    validated(ps.path(), [&] { p.validate(); });
    m.explicit_params = p;
  }
  s.string("jpa_response", m.jpa_response);
  if (m.jpa_response != "single_pole") throw ConfigError(s.child("jpa_response"), "only \"single_pole\" is supported");
  s.integer("optimizer_max_iterations", m.optimizer_max_iterations);
  s.number("optimizer_tolerance", m.optimizer_tolerance);
  s.finish();
}

void read_simulation(Section s, SimulationOptions& o) {
  s.integer("sets", o.sets);
  s.integer("trials_per_set", o.trials_per_set);
  s.integer("holdout_trials", o.holdout_trials);
  s.string("trace_format", o.trace_format);
  if (o.trace_format != "csv" && o.trace_format != "binary") {
    throw ConfigError(s.child("trace_format"), "expected \"csv\" or \"binary\"");
  }
  s.finish();
}

void read_tomography(Section s, TomographyOptions& o) {
  s.integer("n_max", o.n_max);
  std::string method = o.method == tomography::FitMethod::histogram ? "histogram" : "maximum_likelihood";
  s.string("method", method);
  if (method == "maximum_likelihood") {
    o.method = tomography::FitMethod::maximum_likelihood;
  } else if (method == "histogram") {
    o.method = tomography::FitMethod::histogram;
  } else {
    throw ConfigError(s.child("method"), "expected \"maximum_likelihood\" or \"histogram\"");
  }
  s.integer("max_iterations", o.max_iterations);
  s.number("relative_tolerance", o.relative_tolerance);
  if (o.n_max < 1 || o.n_max > fock::kMaxMarginalPhotonNumber) throw ConfigError(s.child("n_max"), "out of range");
  s.finish();
}

void read_characterization(Section s, CharacterizationOptions& o) {
  s.numbers("dephasing_gains_db", o.dephasing_gains_db);
  s.number("gamma0_khz", o.gamma0_khz);
  s.number("dephasing_scatter", o.dephasing_scatter);
  s.numbers("sweep_gains_db", o.sweep_gains_db);
  s.numbers("sweep_temperatures_mk", o.sweep_temperatures_mk);
  s.number("sweep_scatter", o.sweep_scatter);
  s.number("sweep_frequency_ghz", o.sweep_frequency_ghz);
  s.number("curve_min_gain_db", o.curve_min_gain_db);
  s.number("curve_max_gain_db", o.curve_max_gain_db);
  if (!(o.curve_min_gain_db < o.curve_max_gain_db)) throw ConfigError(s.child("curve_max_gain_db"), "must exceed min");
  s.finish();
}

json interval_json(double a, double b) { return json::array({a, b}); }

json number_json(double v) { return v == std::numeric_limits<double>::infinity() ? json("inf") : json(v); }

}  // namespace

temporal::TemporalModeParams RunConfig::mode_params() const {
  return mode.explicit_params ? *mode.explicit_params : sim::emission_mode_params(protocol, chain);
}

tomography::FitOptions RunConfig::fit_options() const {
  return {tomography.method, tomography.max_iterations, tomography.relative_tolerance};
}

RunConfig from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  if (const json* seed = root.find("seed")) {
    if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0)) {
      throw ConfigError("seed", "expected a non-negative integer");
    }
    c.seed = seed->get<std::uint64_t>();
  }
  root.string("output_dir", c.output_dir);
  root.integer("threads", c.threads);

  if (auto s = root.section("protocol")) {
    read_protocol(*s, c);
  } else {
    Section empty(json::object(), "protocol");
    read_protocol(empty, c);
  }
  if (auto s = root.section("chain")) read_chain(*s, c.chain);
  if (auto s = root.section("timing")) read_timing(*s, c.timing);
  if (auto s = root.section("mode")) read_mode(*s, c.mode);
  if (auto s = root.section("simulation")) read_simulation(*s, c.simulation);
  if (auto s = root.section("tomography")) read_tomography(*s, c.tomography);
  if (auto s = root.section("characterization")) read_characterization(*s, c.characterization);
  root.finish();

  validated("protocol", [&] { c.protocol.validate(); });
  validated("chain", [&] { c.chain.validate(); });
  return c;
}

json to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir;
  doc["threads"] = c.threads;
  const auto& p = c.protocol;
  doc["protocol"] = {{"t1_qubit_us", number_json(p.t1_qubit_us)},         {"p_excited_init", p.p_excited_init},
                     {"p_pulse_fail", p.p_pulse_fail},       {"post_rejection", c.post_rejection},
                     {"drive_duration_ns", p.drive_duration_ns}, {"kappa_khz", p.kappa_khz},
                     {"kappa_out_khz", p.kappa_out_khz},     {"qubit_freq_ghz", p.qubit_freq_ghz},
                     {"cavity_freq_ghz", p.cavity_freq_ghz}, {"chi_mhz", p.chi_mhz}};
  const auto& ch = c.chain;
  doc["chain"] = {{"g_jpa_db", ch.g_jpa_db},
                  {"n_jpa", ch.n_jpa},
                  {"n_hemt", ch.n_hemt},
                  {"isolation_l", ch.isolation_l},
                  {"apparatus_gain", ch.apparatus_gain},
                  {"dc_offset_v", ch.dc_offset_v},
                  {"dc_drift_amplitude_v", ch.dc_drift_amplitude_v},
                  {"dc_drift_time_us", ch.dc_drift_time_us},
                  {"trial_period_us", ch.trial_period_us},
                  {"readout_level_ground_v", ch.readout_level_ground_v},
                  {"readout_level_excited_v", ch.readout_level_excited_v},
                  {"gain_bandwidth_mhz", ch.gain_bandwidth_mhz},
                  {"downstream_gain", ch.downstream_gain}};
  json readouts = json::array();
  for (const auto& r : c.timing.readouts) readouts.push_back(interval_json(r.start_us, r.stop_us));
  doc["timing"] = {{"dt_us", c.timing.grid.dt_us},
                   {"n_samples", c.timing.grid.n_samples},
                   {"t0_us", c.timing.grid.t0_us},
                   {"readouts", readouts},
                   {"photon_window", interval_json(c.timing.photon_window.start_us, c.timing.photon_window.stop_us)}};
  json params = nullptr;
  if (c.mode.explicit_params) {
    params = {{"rise_time_ns", c.mode.explicit_params->rise_time_ns},
              {"decay_rate_khz", c.mode.explicit_params->decay_rate_khz},
              {"jpa_bandwidth_mhz", number_json(c.mode.explicit_params->jpa_bandwidth_mhz)}};
  }
  doc["mode"] = {{"params", params},
                 {"jpa_response", c.mode.jpa_response},
                 {"optimizer_max_iterations", c.mode.optimizer_max_iterations},
                 {"optimizer_tolerance", c.mode.optimizer_tolerance}};
  doc["simulation"] = {{"sets", c.simulation.sets},
                       {"trials_per_set", c.simulation.trials_per_set},
                       {"holdout_trials", c.simulation.holdout_trials},
                       {"trace_format", c.simulation.trace_format}};
  doc["tomography"] = {
      {"n_max", c.tomography.n_max},
      {"method", c.tomography.method == tomography::FitMethod::histogram ? "histogram" : "maximum_likelihood"},
      {"max_iterations", c.tomography.max_iterations},
      {"relative_tolerance", c.tomography.relative_tolerance}};
  const auto& o = c.characterization;
  doc["characterization"] = {{"dephasing_gains_db", o.dephasing_gains_db},
                             {"gamma0_khz", o.gamma0_khz},
                             {"dephasing_scatter", o.dephasing_scatter},
                             {"sweep_gains_db", o.sweep_gains_db},
                             {"sweep_temperatures_mk", o.sweep_temperatures_mk},
                             {"sweep_scatter", o.sweep_scatter},
                             {"sweep_frequency_ghz", o.sweep_frequency_ghz},
                             {"curve_min_gain_db", o.curve_min_gain_db},
                             {"curve_max_gain_db", o.curve_max_gain_db}};
  return doc;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return from_json(doc);
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
  return buf;
}

}  // namespace photonchain::config
