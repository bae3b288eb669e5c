#pragma once

// Calibrated single-quadrature tomography of phase-averaged states: Gaussian
// gain calibration on control data, maximum-likelihood (EM) or histogram
// least-squares fits of Fock populations, and multi-set error aggregation.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "photonchain/errors.hpp"
#include "photonchain/fock.hpp"

namespace photonchain::tomography {

using fock::DiagonalDensityMatrix;
using fock::ThermalOccupation;

enum class CalibrationAssumption { squeezed, amplified };

const char* to_string(CalibrationAssumption a) noexcept;
CalibrationAssumption calibration_assumption_from_string(const std::string& s);

struct QuadratureDataset {
  std::vector<double> values;
  bool calibrated = false;  // false: volt*sqrt(us); true: quadrature units
  std::string set_id;
};

struct CalibrationResult {
  double apparatus_gain = 1.0;  // volt*sqrt(us) per quadrature unit
  double assumed_control_variance = fock::kVacuumVariance;
  CalibrationAssumption assumption = CalibrationAssumption::squeezed;
};

/// Control-state quadrature variance assumed by each calibration bound:
/// 1/4 when measuring the squeezed quadrature, 1/4 + nbar for the amplified one.
double assumed_control_variance(CalibrationAssumption assumption, ThermalOccupation nbar);

/// Zero-mean maximum-likelihood Gaussian scale fit of the control set.
CalibrationResult calibrate_gain(const QuadratureDataset& control, CalibrationAssumption assumption,
                                 ThermalOccupation nbar_backaction);

QuadratureDataset apply_calibration(const QuadratureDataset& data, const CalibrationResult& calibration);

enum class FitMethod { maximum_likelihood, histogram };

struct FitOptions {
  FitMethod method = FitMethod::maximum_likelihood;
  int max_iterations = 10000;
  double relative_tolerance = 1e-8;  // on the log-likelihood
};

struct EmResult {
  DiagonalDensityMatrix rho;
  std::vector<double> log_likelihood;  // one entry per iteration, before the update
  int iterations = 0;
};

class EmConvergenceError : public ConvergenceError {
 public:
  EmConvergenceError(const std::string& what, EmResult best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const EmResult& best() const noexcept { return best_; }

 private:
  EmResult best_;
};

/// EM over the probability simplex for sample-weighted data. `weights` may
/// be empty (all ones). The log-likelihood is non-decreasing by construction.
EmResult fit_mixture_em(std::span<const double> x, std::span<const double> weights, int n_max,
                        const FitOptions& options = {});

struct Histogram {
  std::vector<double> edges;    // bins + 1
  std::vector<double> density;  // count / (N * width)
  std::size_t sample_count = 0;

  std::size_t bins() const noexcept { return density.size(); }
  double center(std::size_t i) const noexcept { return 0.5 * (edges[i] + edges[i + 1]); }
};

/// Density histogram with Freedman-Diaconis bin width.
Histogram freedman_diaconis_histogram(std::span<const double> x);

/// Exact simplex-constrained least squares of bin-averaged marginals onto
/// the histogram (active-set enumeration).
DiagonalDensityMatrix fit_histogram_least_squares(const Histogram& histogram, int n_max);

/// Bin-averaged mixture density for each bin.
std::vector<double> model_bin_density(const Histogram& histogram, const DiagonalDensityMatrix& rho);

DiagonalDensityMatrix fit_diagonal(const QuadratureDataset& data, const CalibrationResult& calibration,
                                   int n_max = fock::kDefaultNMax, const FitOptions& options = {});

/// Infinite-data limit of the ML fit: the mixture closest in KL divergence
/// to `pdf`, evaluated by quadrature on [-half_width, half_width].
DiagonalDensityMatrix fit_density_function(const std::function<double(double)>& pdf, int n_max,
                                           double half_width = 8.0, double step = 2e-3);

struct ReconstructionResult {
  DiagonalDensityMatrix rho;            // squeezed-assumption mean, carries uncertainty
  DiagonalDensityMatrix rho_amplified;  // amplified-assumption mean
  std::vector<double> stat_err;
  std::vector<double> sys_lo;
  std::vector<double> sys_hi;
  std::vector<DiagonalDensityMatrix> per_set_squeezed;
  std::vector<DiagonalDensityMatrix> per_set_amplified;
  std::vector<CalibrationResult> calibrations;  // squeezed, one per set
  int n_sets = 0;
  double nbar_backaction = 0.0;
};

/// Per-set calibration and fit under both assumptions; mean and standard
/// deviation of the mean across sets. Sets are fitted in parallel.
ReconstructionResult reconstruct_with_errors(std::span<const QuadratureDataset> photon_sets,
                                             std::span<const QuadratureDataset> control_sets, int n_max,
                                             ThermalOccupation nbar_backaction, const FitOptions& options = {},
                                             unsigned threads = 0);

struct PopulationBounds {
  std::vector<double> low;
  std::vector<double> high;
};

/// Element-wise min/max over the two calibration-assumption pipelines.
PopulationBounds systematic_bounds(const ReconstructionResult& result);

/// A derived scalar with statistical error and systematic band.
struct BoundedValue {
  double value = 0.0;
  double stat = 0.0;
  double sys_lo = 0.0;
  double sys_hi = 0.0;
};

struct ReconstructionSummary {
  BoundedValue g2;                  // full formula
  double g2_shorthand = 0.0;        // 2 p2 / p1 of the central value
  BoundedValue fidelity_vs_fock1;   // sqrt(p1)
};

ReconstructionSummary summarize(const ReconstructionResult& result);

}  // namespace photonchain::tomography
