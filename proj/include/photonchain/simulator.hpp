#pragma once

// Monte-Carlo model of the photon source and single-quadrature measurement
// chain. Produces post-selected voltage traces with hidden truth labels,
// thermal-sweep noise-power tables, and dephasing-versus-gain tables.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photonchain/characterization.hpp"
#include "photonchain/fock.hpp"
#include "photonchain/random.hpp"
#include "photonchain/temporal_mode.hpp"
#include "photonchain/tomography.hpp"

namespace photonchain::sim {

/// Qubit/cavity protocol. Rates are value/2pi in kHz. Frequencies and chi are
/// carried as metadata only.
struct ProtocolConfig {
  double t1_qubit_us = 10.0;  // +inf disables qubit decay
  double p_excited_init = 0.06;
  double p_pulse_fail = 0.0;
  double drive_duration_ns = 150.0;
  double kappa_khz = 410.0;
  double kappa_out_khz = 300.0;
  double qubit_freq_ghz = 3.495;
  double cavity_freq_ghz = 5.804;
  double chi_mhz = -1.0;

  void validate() const;
  /// Probability that the qubit decays before the photon leaves the cavity.
  double decay_race_probability() const;
  double escape_ratio() const { return kappa_out_khz / kappa_khz; }

  /// Defaults with the pulse-failure probability chosen so that decay race
  /// plus pulse failure reject `post_rejection` of ground-start trials.
  static ProtocolConfig with_post_rejection(double post_rejection = 0.26);
};

struct ChainConfig {
  double g_jpa_db = 29.0;
  double n_jpa = 0.39;
  double n_hemt = 18.0;
  double isolation_l = 2.1e-4;
  double apparatus_gain = 1.0;  // volt*sqrt(us) per quadrature unit
  double dc_offset_v = 0.1;
  double dc_drift_amplitude_v = 0.05;
  double dc_drift_time_us = 200.0;
  double trial_period_us = 100.0;
  double readout_level_ground_v = 0.3;
  double readout_level_excited_v = 0.6;
  double gain_bandwidth_mhz = 43.0;
  double downstream_gain = 1.0;  // chain gain beyond the JPA, thermal sweeps only

  void validate() const;
  double g_jpa() const { return characterization::db_to_linear(g_jpa_db); }
  /// Input-referred added noise N_JPA + N_HEMT / G_JPA.
  double added_noise() const { return n_jpa + n_hemt / g_jpa(); }
  double efficiency() const { return characterization::efficiency_from_added_noise(added_noise()); }
  fock::ThermalOccupation backaction() const {
    return characterization::nbar_from_gain(isolation_l, g_jpa_db);
  }
};

struct TimingConfig {
  temporal::TraceGrid grid{0.01, 5600, 20.0};
  std::vector<temporal::TimeInterval> readouts{{-6.0, -2.0}, {10.0, 14.0}};
  temporal::ModeSupport photon_window{};
};

/// Emission mode implied by the protocol and chain: rise = drive duration,
/// decay = kappa, bandwidth from the gain-bandwidth product.
temporal::TemporalModeParams emission_mode_params(const ProtocolConfig& protocol, const ChainConfig& chain);

enum class TrialKind { photon, control };
const char* to_string(TrialKind kind) noexcept;
TrialKind trial_kind_from_string(const std::string& s);

struct TrialRecord {
  temporal::VoltageTrace trace;
  bool pre_readout_ground = true;
  bool post_readout_excited = true;
  bool qubit_decayed = false;
  bool pulse_failed = false;
  int truth_emitted_n = 0;
  double truth_quadrature = 0.0;  // quadrature units, before noise
  TrialKind kind = TrialKind::photon;

  bool retained() const noexcept { return pre_readout_ground && post_readout_excited; }
};

/// Everything needed to render traces, precomputed once per configuration.
class SimulationModel {
 public:
  SimulationModel(ProtocolConfig protocol, ChainConfig chain, TimingConfig timing = {},
                  std::optional<temporal::TemporalModeParams> signal_mode = std::nullopt);

  /// One protocol iteration. `trial_rng` drives the branching and quadrature,
  /// `noise_rng` the white trace noise.
  TrialRecord simulate_trial(TrialKind kind, Rng& trial_rng, Rng& noise_rng, double dc_offset_v) const;

  const ProtocolConfig& protocol() const noexcept { return protocol_; }
  const ChainConfig& chain() const noexcept { return chain_; }
  const TimingConfig& timing() const noexcept { return timing_; }
  const temporal::TemporalModeParams& signal_params() const noexcept { return signal_params_; }
  const temporal::TemporalMode& signal_mode() const noexcept { return mode_; }
  const temporal::WindowFunction& window() const noexcept { return window_; }
  /// Per-sample white-noise standard deviation in volts.
  double noise_sigma() const noexcept { return noise_sigma_; }

 private:
  ProtocolConfig protocol_;
  ChainConfig chain_;
  TimingConfig timing_;
  temporal::TemporalModeParams signal_params_;
  temporal::TemporalMode mode_;
  temporal::WindowFunction window_;
  std::vector<double> backaction_cdf_;
  std::vector<double> readout_mask_pre_;
  std::vector<double> readout_mask_post_;
  double noise_sigma_ = 0.0;
  double p_decay_ = 0.0;
};

/// Draw from the phase-averaged quadrature marginal of |n>.
double sample_fock_quadrature(int n, Rng& rng);

struct DatasetSummary {
  TrialKind kind = TrialKind::photon;
  std::size_t n_trials = 0;
  std::size_t retained = 0;
  std::size_t rejected_initially_excited = 0;
  std::size_t rejected_qubit_decay = 0;
  std::size_t rejected_pulse_failure = 0;
  std::uint64_t seed = 0;

  double retained_fraction() const {
    return n_trials ? static_cast<double>(retained) / static_cast<double>(n_trials) : 0.0;
  }
};

/// Called for every trial, in trial order, retained or not.
using TrialVisitor = std::function<void(std::size_t index, const TrialRecord&)>;

/// Simulates n_trials iterations in parallel batches from per-trial
/// substreams of `seed`; the visitor sees them in order. Throws
/// EmptyDatasetError if post-selection retains nothing.
DatasetSummary simulate_dataset(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                std::uint64_t seed, const TrialVisitor& visit, unsigned threads = 0);

struct SimulatedDataset {
  DatasetSummary summary;
  std::vector<TrialRecord> retained;
};

SimulatedDataset simulate_dataset(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                  std::uint64_t seed, unsigned threads = 0);

struct SimulatedQuadratures {
  DatasetSummary summary;
  tomography::QuadratureDataset dataset;  // uncalibrated, retained trials only
  std::vector<int> truth_emitted_n;       // parallel to dataset.values
};

/// Streams traces through an extractor without keeping them.
SimulatedQuadratures simulate_quadratures(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                          std::uint64_t seed, const temporal::QuadratureExtractor& extractor,
                                          unsigned threads = 0);

/// Probability that a trial survives both readouts.
double expected_retention(const ProtocolConfig& protocol);

/// Analytic emitted photon-number distribution of retained trials.
fock::DiagonalDensityMatrix retained_emitted_state(TrialKind kind, const ProtocolConfig& protocol,
                                                   const ChainConfig& chain);

/// Analytic density of the matched-mode quadrature in quadrature units
/// (raw value divided by the apparatus gain), including added noise.
double measured_quadrature_pdf(TrialKind kind, const ProtocolConfig& protocol, const ChainConfig& chain, double x);

/// Second moment of the control quadrature in the same units.
double measured_control_variance(const ProtocolConfig& protocol, const ChainConfig& chain);

/// Infinite-data reconstruction the tomography pipeline converges to for a
/// matched mode and the given calibration assumption.
fock::DiagonalDensityMatrix expected_reconstruction(const ProtocolConfig& protocol, const ChainConfig& chain,
                                                    tomography::CalibrationAssumption assumption,
                                                    int n_max = fock::kDefaultNMax);

std::vector<characterization::ThermalSweepPoint> simulate_thermal_sweep(std::span<const double> temperatures_mk,
                                                                        std::span<const double> gains_db,
                                                                        const ChainConfig& chain, double scatter,
                                                                        std::uint64_t seed,
                                                                        double frequency_ghz = 5.8);

std::vector<characterization::DephasingPoint> simulate_dephasing_data(std::span<const double> gains_db,
                                                                      double isolation_l, double gamma0_khz,
                                                                      double kappa_khz, double scatter,
                                                                      std::uint64_t seed);

}  // namespace photonchain::sim
