#include "photonchain/tomography.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "photonchain/parallel.hpp"

namespace photonchain::tomography {

namespace {

void require_finite(std::span<const double> values, const std::string& what) {
  if (values.empty()) throw EmptyDatasetError(what + " is empty");
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError(what + " contains non-finite values");
  }
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Standard deviation of the mean; zero for fewer than two values.
double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

DiagonalDensityMatrix mean_state(const std::vector<DiagonalDensityMatrix>& states) {
  std::vector<double> sum(static_cast<std::size_t>(states.front().n_max()) + 1, 0.0);
  for (const auto& s : states) {
    for (int n = 0; n <= s.n_max(); ++n) sum[n] += s[n];
  }
  return DiagonalDensityMatrix::normalized(std::move(sum));
}

// 5-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                 0.4786286704993665, 0.2369268850561891};

Eigen::MatrixXd bin_averaged_marginals(const Histogram& h, int n_max) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(h.bins()), n_max + 1);
  std::vector<double> values(static_cast<std::size_t>(n_max) + 1);
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const double mid = h.center(b);
    const double half = 0.5 * (h.edges[b + 1] - h.edges[b]);
    a.row(static_cast<Eigen::Index>(b)).setZero();
    for (std::size_t k = 0; k < kGaussNodes.size(); ++k) {
      fock::fock_marginal_pdfs(mid + half * kGaussNodes[k], values);
      for (int n = 0; n <= n_max; ++n) a(static_cast<Eigen::Index>(b), n) += 0.5 * kGaussWeights[k] * values[n];
    }
  }
  return a;
}

}  // namespace

const char* to_string(CalibrationAssumption a) noexcept {
  return a == CalibrationAssumption::squeezed ? "squeezed" : "amplified";
}

CalibrationAssumption calibration_assumption_from_string(const std::string& s) {
  if (s == "squeezed") return CalibrationAssumption::squeezed;
  if (s == "amplified") return CalibrationAssumption::amplified;
  throw DomainError("unknown calibration assumption '" + s + "'");
}

double assumed_control_variance(CalibrationAssumption assumption, ThermalOccupation nbar) {
  return assumption == CalibrationAssumption::squeezed ? fock::kVacuumVariance
                                                       : fock::kVacuumVariance + nbar.nbar;
}

CalibrationResult calibrate_gain(const QuadratureDataset& control, CalibrationAssumption assumption,
                                 ThermalOccupation nbar_backaction) {
  require_finite(control.values, "control set");
  double second_moment = 0.0;
  for (double v : control.values) second_moment += v * v;
  second_moment /= static_cast<double>(control.values.size());
  if (!(second_moment > 0.0)) throw DataError("control set has zero variance");

  CalibrationResult result;
  result.assumption = assumption;
  result.assumed_control_variance = assumed_control_variance(assumption, nbar_backaction);
  result.apparatus_gain = std::sqrt(second_moment / result.assumed_control_variance);
  return result;
}

QuadratureDataset apply_calibration(const QuadratureDataset& data, const CalibrationResult& calibration) {
  if (data.calibrated) return data;
  if (!(calibration.apparatus_gain > 0.0)) throw DomainError("calibration gain must be > 0");
  QuadratureDataset out{data.values, true, data.set_id};
  for (double& v : out.values) v /= calibration.apparatus_gain;
  return out;
}

EmResult fit_mixture_em(std::span<const double> x, std::span<const double> weights, int n_max,
                        const FitOptions& options) {
  require_finite(x, "quadrature data");
  if (!weights.empty() && weights.size() != x.size()) throw DataError("weight count differs from data");
  if (n_max < 0 || n_max > fock::kMaxMarginalPhotonNumber) throw DomainError("n_max out of range");

  const auto dim = static_cast<std::size_t>(n_max) + 1;
  const std::size_t count = x.size();
  std::vector<double> table(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    fock::fock_marginal_pdfs(x[i], std::span<double>(table.data() + i * dim, dim));
  }
  double total_weight = 0.0;
  for (std::size_t i = 0; i < count; ++i) total_weight += weights.empty() ? 1.0 : weights[i];
  if (!(total_weight > 0.0)) throw DataError("total weight must be > 0");

  std::vector<double> rho(dim, 1.0 / static_cast<double>(dim));
  std::vector<double> accum(dim);
  std::vector<double> ll_trace;
  constexpr double kFloor = std::numeric_limits<double>::min();

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::fill(accum.begin(), accum.end(), 0.0);
    double ll = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double* p = table.data() + i * dim;
      double denom = 0.0;
      for (std::size_t n = 0; n < dim; ++n) denom += rho[n] * p[n];
      denom = std::max(denom, kFloor);
      const double w = weights.empty() ? 1.0 : weights[i];
      ll += w * std::log(denom);
      const double scale = w / denom;
      for (std::size_t n = 0; n < dim; ++n) accum[n] += p[n] * scale;
    }
    ll_trace.push_back(ll);
    for (std::size_t n = 0; n < dim; ++n) rho[n] *= accum[n] / total_weight;

    const auto iterations = static_cast<int>(ll_trace.size());
    if (iterations >= 2) {
      const double prev = ll_trace[ll_trace.size() - 2];
      if (std::abs(ll - prev) <= options.relative_tolerance * std::abs(prev)) {
        return {DiagonalDensityMatrix::normalized(rho), std::move(ll_trace), iterations};
      }
    }
  }
  const int iterations = static_cast<int>(ll_trace.size());
  throw EmConvergenceError("EM did not converge within " + std::to_string(options.max_iterations) + " iterations",
                           {DiagonalDensityMatrix::normalized(rho), std::move(ll_trace), iterations});
}

Histogram freedman_diaconis_histogram(std::span<const double> x) {
  require_finite(x, "histogram data");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double lo = sorted.front();
  const double hi = sorted.back();
  double width = 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
  if (!(width > 0.0)) width = (hi > lo) ? (hi - lo) : 1.0;
  const auto bins = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / width)));

  Histogram h;
  h.sample_count = sorted.size();
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.density.assign(bins, 0.0);
  for (double v : sorted) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    h.density[std::min(b, bins - 1)] += 1.0;
  }
  for (double& d : h.density) d /= static_cast<double>(sorted.size()) * width;
  return h;
}

DiagonalDensityMatrix fit_histogram_least_squares(const Histogram& histogram, int n_max) {
  if (histogram.bins() == 0) throw EmptyDatasetError("histogram has no bins");
  if (n_max < 0 || n_max > 16) throw DomainError("n_max out of range for active-set enumeration");
  const Eigen::MatrixXd a = bin_averaged_marginals(histogram, n_max);
  const Eigen::Map<const Eigen::VectorXd> target(histogram.density.data(),
                                                  static_cast<Eigen::Index>(histogram.density.size()));
  const int dim = n_max + 1;

  // The constrained optimum is the equality-constrained solution on some
  // face of the simplex; enumerate faces and keep the best feasible one.
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(dim);
  for (unsigned mask = 1; mask < (1u << dim); ++mask) {
    std::vector<int> active;
    for (int n = 0; n < dim; ++n) {
      if (mask & (1u << n)) active.push_back(n);
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd as(a.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) as.col(j) = a.col(active[static_cast<std::size_t>(j)]);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = as.transpose() * as;
    kkt.topRightCorner(k, 1).setOnes();
    kkt.bottomLeftCorner(1, k).setOnes();
    Eigen::VectorXd rhs(k + 1);
    rhs.head(k) = as.transpose() * target;
    rhs(k) = 1.0;
    const auto lu = kkt.fullPivLu();
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    if ((sol.head(k).array() < -1e-12).any()) continue;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index j = 0; j < k; ++j) full(active[static_cast<std::size_t>(j)]) = std::max(0.0, sol(j));
    const double cost = (a * full - target).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = full;
    }
  }
  if (!std::isfinite(best_cost)) throw FitError("histogram least squares found no feasible solution");
  return DiagonalDensityMatrix::normalized({best.data(), best.data() + dim});
}

std::vector<double> model_bin_density(const Histogram& histogram, const DiagonalDensityMatrix& rho) {
  const Eigen::MatrixXd a = bin_averaged_marginals(histogram, rho.n_max());
  const auto p = rho.populations();
  const Eigen::Map<const Eigen::VectorXd> weights(p.data(), static_cast<Eigen::Index>(p.size()));
  const Eigen::VectorXd model = a * weights;
  return {model.data(), model.data() + model.size()};
}

DiagonalDensityMatrix fit_diagonal(const QuadratureDataset& data, const CalibrationResult& calibration, int n_max,
                                   const FitOptions& options) {
  const QuadratureDataset calibrated = apply_calibration(data, calibration);
  require_finite(calibrated.values, "quadrature set");
  if (options.method == FitMethod::histogram) {
    return fit_histogram_least_squares(freedman_diaconis_histogram(calibrated.values), n_max);
  }
  return fit_mixture_em(calibrated.values, {}, n_max, options).rho;
}

DiagonalDensityMatrix fit_density_function(const std::function<double(double)>& pdf, int n_max,
                                           double half_width, double step) {
  const auto points = static_cast<std::size_t>(std::floor(2.0 * half_width / step)) + 1;
  std::vector<double> x(points);
  std::vector<double> w(points);
  for (std::size_t i = 0; i < points; ++i) {
    x[i] = -half_width + step * static_cast<double>(i);
    w[i] = std::max(0.0, pdf(x[i])) * step;
  }
  FitOptions options;
  options.max_iterations = 200000;
  options.relative_tolerance = 1e-15;
  try {
    return fit_mixture_em(x, w, n_max, options).rho;
  } catch (const EmConvergenceError& e) {
    // Boundary components decay sublinearly; the best iterate is accurate
    // far below any statistical error this is compared against.
    return e.best().rho;
  }
}

ReconstructionResult reconstruct_with_errors(std::span<const QuadratureDataset> photon_sets,
                                             std::span<const QuadratureDataset> control_sets, int n_max,
                                             ThermalOccupation nbar_backaction, const FitOptions& options,
                                             unsigned threads) {
  if (photon_sets.size() != control_sets.size()) {
    throw PairingError("photon and control set counts differ (" + std::to_string(photon_sets.size()) + " vs " +
                       std::to_string(control_sets.size()) + ")");
  }
  if (photon_sets.size() < 2) throw PairingError("at least two paired sets are required");

  const std::size_t sets = photon_sets.size();
  std::vector<std::optional<DiagonalDensityMatrix>> squeezed(sets);
  std::vector<std::optional<DiagonalDensityMatrix>> amplified(sets);
  std::vector<CalibrationResult> calibrations(sets);
  parallel_for(
      sets,
      [&](std::size_t s) {
        const auto cal_sq = calibrate_gain(control_sets[s], CalibrationAssumption::squeezed, nbar_backaction);
        const auto cal_amp = calibrate_gain(control_sets[s], CalibrationAssumption::amplified, nbar_backaction);
        calibrations[s] = cal_sq;
        squeezed[s] = fit_diagonal(photon_sets[s], cal_sq, n_max, options);
        amplified[s] = fit_diagonal(photon_sets[s], cal_amp, n_max, options);
      },
      threads);

  std::vector<DiagonalDensityMatrix> sq;
  std::vector<DiagonalDensityMatrix> amp;
  for (std::size_t s = 0; s < sets; ++s) {
    sq.push_back(*squeezed[s]);
    amp.push_back(*amplified[s]);
  }
  DiagonalDensityMatrix central = mean_state(sq);
  DiagonalDensityMatrix alt = mean_state(amp);

  const auto dim = static_cast<std::size_t>(n_max) + 1;
  std::vector<double> stat(dim), lo(dim), hi(dim);
  std::vector<double> column(sets);
  for (std::size_t n = 0; n < dim; ++n) {
    for (std::size_t s = 0; s < sets; ++s) column[s] = sq[s][static_cast<int>(n)];
    stat[n] = standard_error(column);
    lo[n] = std::min(central[static_cast<int>(n)], alt[static_cast<int>(n)]);
    hi[n] = std::max(central[static_cast<int>(n)], alt[static_cast<int>(n)]);
  }
  central.set_uncertainty({stat, lo, hi});

  return ReconstructionResult{std::move(central),
                              std::move(alt),
                              std::move(stat),
                              std::move(lo),
                              std::move(hi),
                              std::move(sq),
                              std::move(amp),
                              std::move(calibrations),
                              static_cast<int>(sets),
                              nbar_backaction.nbar};
}

PopulationBounds systematic_bounds(const ReconstructionResult& result) {
  const int n_max = result.rho.n_max();
  PopulationBounds b;
  for (int n = 0; n <= n_max; ++n) {
    b.low.push_back(std::min(result.rho[n], result.rho_amplified[n]));
    b.high.push_back(std::max(result.rho[n], result.rho_amplified[n]));
  }
  return b;
}

ReconstructionSummary summarize(const ReconstructionResult& result) {
  const auto safe_g2 = [](const DiagonalDensityMatrix& rho) {
    try {
      return fock::g2_zero(rho);
    } catch (const UndefinedValueError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const auto bounded = [&](auto&& fn) {
    BoundedValue v;
    v.value = fn(result.rho);
    const double alt = fn(result.rho_amplified);
    v.sys_lo = std::min(v.value, alt);
    v.sys_hi = std::max(v.value, alt);
    std::vector<double> per_set;
    for (const auto& s : result.per_set_squeezed) {
      const double x = fn(s);
      if (std::isfinite(x)) per_set.push_back(x);
    }
    v.stat = standard_error(per_set);
    return v;
  };

  ReconstructionSummary summary;
  summary.g2 = bounded(safe_g2);
  summary.fidelity_vs_fock1 = bounded([](const DiagonalDensityMatrix& rho) { return std::sqrt(rho[1]); });
  summary.g2_shorthand = result.rho[1] > 0.0 ? fock::g2_two_photon_shorthand(result.rho)
                                             : std::numeric_limits<double>::quiet_NaN();
  return summary;
}

}  // namespace photonchain::tomography
