#include "photonchain/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>

#include "photonchain/errors.hpp"
#include "photonchain/parallel.hpp"

namespace photonchain::sim {

namespace {

constexpr std::size_t kBatchSize = 256;

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(name) + " must lie in [0, 1]");
}

/// Rejection-sampling envelope N(0, s^2) with bound M for each Fock marginal.
struct QuadratureEnvelope {
  double sigma = 0.5;
  double bound = 1.0;
};

const std::array<QuadratureEnvelope, fock::kMaxMarginalPhotonNumber + 1>& envelopes() {
  static const auto table = [] {
    std::array<QuadratureEnvelope, fock::kMaxMarginalPhotonNumber + 1> t{};
    for (int n = 0; n <= fock::kMaxMarginalPhotonNumber; ++n) {
      const double sigma = std::sqrt(0.5 * (n + 1.0));
      double ratio_max = 0.0;
      for (double x = -14.0; x <= 14.0; x += 1e-3) {
        const double g = std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
        ratio_max = std::max(ratio_max, fock::fock_marginal_pdf(n, x) / g);
      }
      t[static_cast<std::size_t>(n)] = {sigma, 1.01 * ratio_max};
    }
    return t;
  }();
  return table;
}

/// Backaction photons are truncated at this count in simulation and analysis alike.
fock::DiagonalDensityMatrix backaction_state(const ChainConfig& chain) {
  return fock::thermal_state(chain.backaction(), fock::kSimulationNMax);
}

}  // namespace

void ProtocolConfig::validate() const {
  if (!(t1_qubit_us > 0.0)) throw DomainError("t1_qubit_us must be > 0");
  require_probability(p_excited_init, "p_excited_init");
  require_probability(p_pulse_fail, "p_pulse_fail");
  if (!(drive_duration_ns >= 0.0)) throw DomainError("drive_duration_ns must be >= 0");
  if (!(kappa_out_khz > 0.0 && kappa_out_khz <= kappa_khz)) throw DomainError("need 0 < kappa_out <= kappa");
}

double ProtocolConfig::decay_race_probability() const {
  if (std::isinf(t1_qubit_us)) return 0.0;
  const double kappa = 2.0 * std::numbers::pi * kappa_khz * 1e-3;  // rad/us
  return 1.0 / (1.0 + kappa * t1_qubit_us);
}

ProtocolConfig ProtocolConfig::with_post_rejection(double post_rejection) {
  require_probability(post_rejection, "post_rejection");
  ProtocolConfig p;
  const double decay = p.decay_race_probability();
  p.p_pulse_fail = std::max(0.0, 1.0 - (1.0 - post_rejection) / (1.0 - decay));
  return p;
}

void ChainConfig::validate() const {
  if (!(g_jpa_db >= 0.0 && g_jpa_db <= 40.0)) throw DomainError("g_jpa_db must lie in [0, 40]");
  if (!(n_jpa >= 0.0) || !(n_hemt >= 0.0)) throw DomainError("added noise must be >= 0");
  if (!(isolation_l >= 0.0)) throw DomainError("isolation_l must be >= 0");
  if (!(apparatus_gain > 0.0)) throw DomainError("apparatus_gain must be > 0");
  if (!(dc_drift_amplitude_v >= 0.0)) throw DomainError("dc_drift_amplitude_v must be >= 0");
  if (!(dc_drift_time_us > 0.0) || !(trial_period_us > 0.0)) throw DomainError("drift times must be > 0");
  if (!(gain_bandwidth_mhz > 0.0)) throw DomainError("gain_bandwidth_mhz must be > 0");
  if (!(downstream_gain > 0.0)) throw DomainError("downstream_gain must be > 0");
}

temporal::TemporalModeParams emission_mode_params(const ProtocolConfig& protocol, const ChainConfig& chain) {
  return {protocol.drive_duration_ns, protocol.kappa_khz,
          temporal::jpa_bandwidth_from_gain(chain.gain_bandwidth_mhz, chain.g_jpa_db)};
}

const char* to_string(TrialKind kind) noexcept { return kind == TrialKind::photon ? "photon" : "control"; }

TrialKind trial_kind_from_string(const std::string& s) {
  if (s == "photon") return TrialKind::photon;
  if (s == "control") return TrialKind::control;
  throw DomainError("unknown trial kind '" + s + "'");
}

double sample_fock_quadrature(int n, Rng& rng) {
  if (n < 0 || n > fock::kMaxMarginalPhotonNumber) throw DomainError("photon number out of sampling range");
  const auto& env = envelopes()[static_cast<std::size_t>(n)];
  std::normal_distribution<double> proposal(0.0, env.sigma);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double norm = 1.0 / (env.sigma * std::sqrt(2.0 * std::numbers::pi));
  while (true) {
    const double x = proposal(rng);
    const double g = norm * std::exp(-0.5 * x * x / (env.sigma * env.sigma));
    if (uniform(rng) * env.bound * g <= fock::fock_marginal_pdf(n, x)) return x;
  }
}

SimulationModel::SimulationModel(ProtocolConfig protocol, ChainConfig chain, TimingConfig timing,
                                 std::optional<temporal::TemporalModeParams> signal_mode)
    : protocol_(protocol),
      chain_(chain),
      timing_(std::move(timing)),
      signal_params_(signal_mode.value_or(emission_mode_params(protocol, chain))),
      mode_(temporal::mode_shape(signal_params_, timing_.grid, timing_.photon_window)),
      window_(temporal::background_window(timing_.grid, timing_.readouts)) {
  protocol_.validate();
  chain_.validate();

  const auto thermal = backaction_state(chain_);
  double cumulative = 0.0;
  for (double p : thermal.populations()) {
    cumulative += p;
    backaction_cdf_.push_back(cumulative);
  }
  backaction_cdf_.back() = 1.0;

  const auto& grid = timing_.grid;
  readout_mask_pre_.assign(grid.n_samples, 0.0);
  readout_mask_post_.assign(grid.n_samples, 0.0);
  for (const auto& r : timing_.readouts) {
    auto& mask = r.stop_us <= 0.0 ? readout_mask_pre_ : readout_mask_post_;
    for (std::size_t i = 0; i < grid.n_samples; ++i) {
      if (r.contains(grid.time(i))) mask[i] = 1.0;
    }
  }

  // White noise whose projection through the exact extractor has variance
  // apparatus_gain^2 * N_add / 2.
  const double overlap = temporal::inner_product(mode_.samples(), window_.samples(), grid.dt_us);
  noise_sigma_ = chain_.apparatus_gain *
                 std::sqrt(0.5 * chain_.added_noise() * (1.0 - overlap * overlap) / grid.dt_us);
  p_decay_ = protocol_.decay_race_probability();
}

TrialRecord SimulationModel::simulate_trial(TrialKind kind, Rng& trial_rng, Rng& noise_rng, double dc_offset_v) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  TrialRecord rec;
  rec.kind = kind;

  rec.pre_readout_ground = !(uniform(trial_rng) < protocol_.p_excited_init);
  const double u_backaction = uniform(trial_rng);
  const int backaction = static_cast<int>(
      std::upper_bound(backaction_cdf_.begin(), backaction_cdf_.end(), u_backaction) - backaction_cdf_.begin());
  rec.pulse_failed = uniform(trial_rng) < protocol_.p_pulse_fail;

  int intended = 0;
  bool qubit_excited = false;
  if (rec.pre_readout_ground) {
    if (!rec.pulse_failed) {
      intended = kind == TrialKind::photon ? 1 : 0;
      qubit_excited = true;
    }
  } else {
    rec.pulse_failed = false;
    // Blue sideband leaves |e,0> alone; the qubit pi-pulse de-excites it.
    qubit_excited = kind == TrialKind::photon;
  }

  const double escape = protocol_.escape_ratio();
  const bool intended_escapes = intended == 1 && uniform(trial_rng) < escape;
  int emitted = intended_escapes ? 1 : 0;
  for (int i = 0; i < backaction; ++i) emitted += uniform(trial_rng) < escape ? 1 : 0;

  rec.qubit_decayed = qubit_excited && uniform(trial_rng) < p_decay_;
  // A photon released by qubit decay leaves at another frequency.
  if (rec.qubit_decayed && intended_escapes) --emitted;
  rec.post_readout_excited = qubit_excited && !rec.qubit_decayed;
  rec.truth_emitted_n = emitted;
  rec.truth_quadrature = sample_fock_quadrature(emitted, trial_rng);

  const auto f = mode_.samples();
  const double signal = chain_.apparatus_gain * rec.truth_quadrature;
  const double pre_level = rec.pre_readout_ground ? chain_.readout_level_ground_v : chain_.readout_level_excited_v;
  const double post_level = rec.post_readout_excited ? chain_.readout_level_excited_v : chain_.readout_level_ground_v;
  std::normal_distribution<double> noise(0.0, 1.0);
  auto& samples = rec.trace.samples;
  samples.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    samples[i] = dc_offset_v + signal * f[i] + noise_sigma_ * noise(noise_rng) +
                 pre_level * readout_mask_pre_[i] + post_level * readout_mask_post_[i];
  }
  return rec;
}

DatasetSummary simulate_dataset(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                std::uint64_t seed, const TrialVisitor& visit, unsigned threads) {
  if (n_trials == 0) throw DomainError("n_trials must be >= 1");
  const auto& chain = model.chain();

  // Correlated dc drift across consecutive trials (first-order autoregressive).
  std::vector<double> offsets(n_trials);
  {
    Rng drift_rng = substream(seed, "drift");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double corr = std::exp(-chain.trial_period_us / chain.dc_drift_time_us);
    const double innovation = std::sqrt(1.0 - corr * corr);
    double drift = chain.dc_drift_amplitude_v * normal(drift_rng);
    for (auto& o : offsets) {
      o = chain.dc_offset_v + drift;
      drift = corr * drift + innovation * chain.dc_drift_amplitude_v * normal(drift_rng);
    }
  }

  DatasetSummary summary;
  summary.kind = kind;
  summary.n_trials = n_trials;
  summary.seed = seed;
  std::vector<TrialRecord> batch;
  for (std::size_t start = 0; start < n_trials; start += kBatchSize) {
    const std::size_t count = std::min(kBatchSize, n_trials - start);
    batch.assign(count, TrialRecord{});
    parallel_for(
        count,
        [&](std::size_t j) {
          const std::size_t index = start + j;
          Rng trial_rng = substream(seed, "trial", index);
          Rng noise_rng = substream(seed, "noise", index);
          batch[j] = model.simulate_trial(kind, trial_rng, noise_rng, offsets[index]);
        },
        threads);
    for (std::size_t j = 0; j < count; ++j) {
      const auto& rec = batch[j];
      if (!rec.pre_readout_ground) {
        ++summary.rejected_initially_excited;
      } else if (!rec.post_readout_excited) {
        ++(rec.pulse_failed ? summary.rejected_pulse_failure : summary.rejected_qubit_decay);
      } else {
        ++summary.retained;
      }
      visit(start + j, rec);
    }
  }
  if (summary.retained == 0) throw EmptyDatasetError("post-selection retained no trials");
  return summary;
}

SimulatedDataset simulate_dataset(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                  std::uint64_t seed, unsigned threads) {
  SimulatedDataset out;
  out.summary = simulate_dataset(
      kind, n_trials, model, seed,
      [&](std::size_t, const TrialRecord& rec) {
        if (rec.retained()) out.retained.push_back(rec);
      },
      threads);
  return out;
}

SimulatedQuadratures simulate_quadratures(TrialKind kind, std::size_t n_trials, const SimulationModel& model,
                                          std::uint64_t seed, const temporal::QuadratureExtractor& extractor,
                                          unsigned threads) {
  SimulatedQuadratures out;
  out.dataset.set_id = std::string(to_string(kind)) + "-" + std::to_string(seed);
  out.summary = simulate_dataset(
      kind, n_trials, model, seed,
      [&](std::size_t, const TrialRecord& rec) {
        if (!rec.retained()) return;
        out.dataset.values.push_back(extractor(rec.trace.samples));
        out.truth_emitted_n.push_back(rec.truth_emitted_n);
      },
      threads);
  return out;
}

double expected_retention(const ProtocolConfig& protocol) {
  return (1.0 - protocol.p_excited_init) * (1.0 - protocol.p_pulse_fail) *
         (1.0 - protocol.decay_race_probability());
}

fock::DiagonalDensityMatrix retained_emitted_state(TrialKind kind, const ProtocolConfig& protocol,
                                                   const ChainConfig& chain) {
  const auto thermal = backaction_state(chain);
  const auto cavity = kind == TrialKind::photon
                          ? fock::add_photon_numbers(fock::DiagonalDensityMatrix::fock(1, 1), thermal,
                                                     fock::kSimulationNMax + 1)
                          : thermal;
  return fock::loss_channel(cavity, protocol.escape_ratio());
}

double measured_quadrature_pdf(TrialKind kind, const ProtocolConfig& protocol, const ChainConfig& chain, double x) {
  // Adding Gaussian noise of variance N/2 equals a loss channel of
  // efficiency 1/(2N+1) followed by a stretch of sqrt(2N+1).
  const double n_add = chain.added_noise();
  const double stretch = std::sqrt(1.0 + 2.0 * n_add);
  const auto measured = fock::loss_channel(retained_emitted_state(kind, protocol, chain), 1.0 / (1.0 + 2.0 * n_add));
  return fock::mixture_pdf(measured, x / stretch) / stretch;
}

double measured_control_variance(const ProtocolConfig& protocol, const ChainConfig& chain) {
  const auto control = retained_emitted_state(TrialKind::control, protocol, chain);
  return fock::kVacuumVariance * (1.0 + 2.0 * control.mean_photon_number()) + 0.5 * chain.added_noise();
}

fock::DiagonalDensityMatrix expected_reconstruction(const ProtocolConfig& protocol, const ChainConfig& chain,
                                                    tomography::CalibrationAssumption assumption, int n_max) {
  const double target = tomography::assumed_control_variance(assumption, chain.backaction());
  const double gain = std::sqrt(measured_control_variance(protocol, chain) / target);
  return tomography::fit_density_function(
      [&](double x) { return gain * measured_quadrature_pdf(TrialKind::photon, protocol, chain, gain * x); },
      n_max);
}

std::vector<characterization::ThermalSweepPoint> simulate_thermal_sweep(std::span<const double> temperatures_mk,
                                                                        std::span<const double> gains_db,
                                                                        const ChainConfig& chain, double scatter,
                                                                        std::uint64_t seed, double frequency_ghz) {
  Rng rng = substream(seed, "sweep", 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<characterization::ThermalSweepPoint> out;
  for (double gain_db : gains_db) {
    const double g_jpa = characterization::db_to_linear(gain_db);
    const double chain_gain = g_jpa * chain.downstream_gain;
    for (double t : temperatures_mk) {
      const double s_in = characterization::planck_occupation(t, frequency_ghz);
      const double s_out = chain_gain * (s_in + chain.n_jpa + chain.n_hemt / g_jpa) * (1.0 + scatter * normal(rng));
      out.push_back({gain_db, t, s_in, s_out});
    }
  }
  return out;
}

std::vector<characterization::DephasingPoint> simulate_dephasing_data(std::span<const double> gains_db,
                                                                      double isolation_l, double gamma0_khz,
                                                                      double kappa_khz, double scatter,
                                                                      std::uint64_t seed) {
  Rng rng = substream(seed, "sweep", 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<characterization::DephasingPoint> out;
  for (double gain_db : gains_db) {
    if (!(gain_db >= 0.0 && gain_db <= 40.0)) throw DomainError("dephasing gain outside [0, 40] dB");
    const double gamma = characterization::dephasing_rate_khz(isolation_l, gamma0_khz, kappa_khz, gain_db);
    // The generating scatter is reported as the point error, as an experiment would quote its error bars.
    out.push_back({gain_db, gamma * (1.0 + scatter * normal(rng)), scatter * gamma});
  }
  return out;
}

}  // namespace photonchain::sim
