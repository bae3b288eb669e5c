#pragma once

// Parameter estimation for the measurement chain: JPA backaction from qubit
// dephasing, added noise from thermal-load sweeps, the efficiency model,
// and the comparison of measured and expected states.
//
// Rates are quoted as value/2pi in kHz throughout.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "photonchain/fock.hpp"
#include "photonchain/tomography.hpp"

namespace photonchain::characterization {

using Covariance2 = std::array<std::array<double, 2>, 2>;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct Residual {
  double x = 0.0;
  double observed = 0.0;
  double model = 0.0;
};

struct DephasingPoint {
  double gain_db = 0.0;
  double gamma_khz = 0.0;
  double sigma_khz = 0.0;  // 0 when unknown
};

struct BackactionModel {
  double isolation_l = 0.0;
  double gamma0_khz = 0.0;
  double kappa_khz = 410.0;
  Covariance2 covariance{};  // over (L, gamma0)
  std::vector<Residual> residuals;

  double isolation_err() const { return std::sqrt(covariance[0][0]); }
  double gamma0_err() const { return std::sqrt(covariance[1][1]); }
};

/// nbar = L (G - 1) / 4 with G the linear JPA power gain.
fock::ThermalOccupation nbar_from_gain(double isolation_l, double gain_db);
fock::ThermalOccupation nbar_from_gain(const BackactionModel& model, double gain_db);
/// First-order standard error of nbar from the isolation uncertainty.
double nbar_error(const BackactionModel& model, double gain_db);

/// gamma0 + kappa (2 nbar + 2 nbar^2).
double dephasing_rate_khz(double isolation_l, double gamma0_khz, double kappa_khz, double gain_db);

/// Weighted Gauss-Newton fit of (L, gamma0). Needs at least three points.
BackactionModel fit_dephasing(std::span<const DephasingPoint> data, double kappa_khz);

/// Thermal occupation plus vacuum half-quantum, in quanta at the given frequency.
double planck_occupation(double temperature_mk, double frequency_ghz);

struct ThermalSweepPoint {
  double gain_db = 0.0;  // JPA gain of the sweep this point belongs to
  double temperature_mk = 0.0;
  double s_in = 0.0;   // quanta
  double s_out = 0.0;  // arbitrary power units
};

struct GainNoiseFit {
  double gain_db = 0.0;
  double chain_gain = 0.0;
  double chain_gain_err = 0.0;
  double n_add = 0.0;
  double n_add_err = 0.0;
  std::vector<Residual> residuals;
};

/// Per-gain regression S_out = G S_in + G N_add.
std::vector<GainNoiseFit> fit_thermal_sweep(std::span<const ThermalSweepPoint> points);

struct AddedNoiseModel {
  double n_jpa = 0.0;
  double n_hemt = 0.0;
  Covariance2 covariance{};  // over (n_jpa, n_hemt)
  std::vector<GainNoiseFit> per_gain;

  double n_add(double gain_db) const { return n_jpa + n_hemt / db_to_linear(gain_db); }
  double n_add_err(double gain_db) const;
  /// A phase-sensitive chain is expected to sit at or above 1/4 quantum.
  bool at_or_above_quantum_limit() const { return n_jpa >= 0.25; }
};

/// Weighted least squares of N_add = N_JPA + N_HEMT / G_JPA.
AddedNoiseModel fit_added_noise_model(std::span<const GainNoiseFit> per_gain);

/// 1 / (2 N_add + 1).
double efficiency_from_added_noise(double n_add);

struct EfficiencyPoint {
  double gain_db = 0.0;
  double eta = 0.0;
  double eta_err = 0.0;
};

/// Efficiency interpolated through the added-noise model only.
class EfficiencyCurve {
 public:
  EfficiencyCurve(AddedNoiseModel model, double min_gain_db, double max_gain_db);

  EfficiencyPoint at(double gain_db) const;
  std::vector<EfficiencyPoint> sample(double step_db) const;
  const AddedNoiseModel& model() const noexcept { return model_; }
  double min_gain_db() const noexcept { return min_gain_db_; }
  double max_gain_db() const noexcept { return max_gain_db_; }

 private:
  AddedNoiseModel model_;
  double min_gain_db_;
  double max_gain_db_;
};

EfficiencyCurve efficiency_curve(const AddedNoiseModel& model, double min_gain_db, double max_gain_db);

struct ComparisonReport {
  double gain_db = 0.0;
  double eta = 0.0;
  double eta_err = 0.0;
  double escape_ratio = 0.0;  // kappa_out / kappa
  fock::DiagonalDensityMatrix rho_expected = fock::DiagonalDensityMatrix::vacuum(1);
  tomography::BoundedValue fidelity_expected;
  tomography::BoundedValue fidelity_ideal;
  tomography::BoundedValue g2;
};

/// Fidelity of the measured state with the expected one and with |1><1|.
/// Statistical errors are set-to-set standard errors; systematic bands span
/// both calibration assumptions and eta +- its standard error.
ComparisonReport compare_to_expectation(const tomography::ReconstructionResult& measured, double kappa_khz,
                                        double kappa_out_khz, const EfficiencyCurve& curve, double gain_db);

}  // namespace photonchain::characterization
