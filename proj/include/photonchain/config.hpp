#pragma once

// Run configuration: a JSON document whose every field has a default.
// Unknown keys and wrongly typed values raise ConfigError naming the dotted
// field path. `to_json` emits the fully resolved document, which loads back
// to an identical RunConfig.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "photonchain/simulator.hpp"
#include "photonchain/tomography.hpp"
#include "json.hpp"

namespace photonchain::config {

struct SimulationOptions {
  std::size_t sets = 8;
  std::size_t trials_per_set = 7000;
  std::size_t holdout_trials = 2000;  // per kind, for mode optimization
  std::string trace_format = "binary";
};

struct ModeOptions {
  /// Empty: derive from the protocol and chain at the working gain.
  std::optional<temporal::TemporalModeParams> explicit_params;
  std::string jpa_response = "single_pole";
  int optimizer_max_iterations = 500;
  double optimizer_tolerance = 1e-4;
};

struct TomographyOptions {
  int n_max = fock::kDefaultNMax;
  tomography::FitMethod method = tomography::FitMethod::maximum_likelihood;
  int max_iterations = 10000;
  double relative_tolerance = 1e-8;
};

/// `count` evenly spaced points on [lo, hi].
inline std::vector<double> even_grid(double lo, double hi, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(count > 1 ? lo + (hi - lo) * i / (count - 1) : lo);
  return out;
}

struct CharacterizationOptions {
  std::vector<double> dephasing_gains_db{17, 19, 21, 23, 25, 27, 29, 31, 33};
  double gamma0_khz = 40.0;
  double dephasing_scatter = 0.05;
  std::vector<double> sweep_gains_db{20, 25, 30};
  // Few temperatures leave the per-gain residual variance poorly determined
  // and the error bars undercover.
  std::vector<double> sweep_temperatures_mk = even_grid(79.0, 900.0, 40);
  double sweep_scatter = 0.02;
  double sweep_frequency_ghz = 5.8;
  double curve_min_gain_db = 17.0;
  double curve_max_gain_db = 33.0;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "out";
  unsigned threads = 0;
  double post_rejection = 0.26;  // used when p_pulse_fail is not given
  sim::ProtocolConfig protocol = sim::ProtocolConfig::with_post_rejection(0.26);
  sim::ChainConfig chain;
  sim::TimingConfig timing;
  SimulationOptions simulation;
  ModeOptions mode;
  TomographyOptions tomography;
  CharacterizationOptions characterization;

  /// Mode parameters in force at the chain's working gain.
  temporal::TemporalModeParams mode_params() const;
  tomography::FitOptions fit_options() const;
};

RunConfig from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);

/// Throws IoError if unreadable, ConfigError on schema violations.
RunConfig load(const std::filesystem::path& path);
/// FNV-1a of the compact resolved document, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace photonchain::config
