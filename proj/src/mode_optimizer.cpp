#include "photonchain/mode_optimizer.hpp"

#include <cmath>
#include <limits>

#include "photonchain/nelder_mead.hpp"
#include "photonchain/parallel.hpp"
#include "photonchain/tomography.hpp"

namespace photonchain::temporal {

namespace {

namespace tomo = photonchain::tomography;

// Objective value for parameters the grid cannot represent.
constexpr double kInfeasible = 2.0;

// The background projection does not depend on the mode, so it is computed once.
struct ProjectedSet {
  const TraceMatrix* traces = nullptr;
  std::vector<double> on_window;
};

ProjectedSet project_window(const TraceMatrix& traces, const WindowFunction& window, unsigned threads) {
  ProjectedSet out{&traces, std::vector<double>(traces.rows())};
  parallel_for(
      traces.rows(),
      [&](std::size_t i) { out.on_window[i] = inner_product(traces.row(i), window.samples(), traces.grid().dt_us); },
      threads);
  return out;
}

std::vector<double> extract(const ProjectedSet& set, const TemporalMode& mode, double overlap) {
  const auto f = mode.samples();
  std::size_t begin = 0;
  std::size_t end = f.size();
  while (begin < end && f[begin] == 0.0) ++begin;
  while (end > begin && f[end - 1] == 0.0) --end;
  const double dt = mode.grid().dt_us;
  const double denominator = 1.0 - overlap * overlap;
  std::vector<double> values(set.traces->rows());
  for (std::size_t r = 0; r < values.size(); ++r) {
    const auto trace = set.traces->row(r);
    double on_mode = 0.0;
    for (std::size_t i = begin; i < end; ++i) on_mode += trace[i] * f[i];
    values[r] = (on_mode * dt - overlap * set.on_window[r]) / denominator;
  }
  return values;
}

double evaluate(const ProjectedSet& photon, const ProjectedSet& control, const TemporalModeParams& params,
                const WindowFunction& window, const ModeOptimizationOptions& options) {
  const TemporalMode mode = mode_shape(params, photon.traces->grid(), options.support);
  const double overlap = inner_product(mode.samples(), window.samples(), mode.grid().dt_us);
  if (!(std::abs(1.0 - overlap * overlap) > 1e-12)) {
    throw SingularityError("mode and background window are linearly dependent");
  }
  const tomo::QuadratureDataset photon_data{extract(photon, mode, overlap), false, "photon"};
  const tomo::QuadratureDataset control_data{extract(control, mode, overlap), false, "control"};
  const auto calibration = tomo::calibrate_gain(control_data, tomo::CalibrationAssumption::squeezed,
                                                fock::ThermalOccupation{options.nbar_backaction});
  const auto calibrated = tomo::apply_calibration(photon_data, calibration);
  try {
    return tomo::fit_mixture_em(calibrated.values, {}, options.n_max).rho[0];
  } catch (const tomo::EmConvergenceError& e) {
    return e.best().rho[0];
  }
}

void check_inputs(const TraceMatrix& photon, const TraceMatrix& control, const WindowFunction& window) {
  if (!(photon.grid() == control.grid()) || !(photon.grid() == window.grid())) {
    throw DataError("photon, control and window grids differ");
  }
  if (photon.rows() == 0 || control.rows() == 0) throw EmptyDatasetError("mode optimization needs traces");
}

TemporalModeParams from_log(const optim::Point& x) {
  return {std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
}

}  // namespace

double zero_photon_population(const TraceMatrix& photon, const TraceMatrix& control,
                              const TemporalModeParams& params, const WindowFunction& window,
                              const ModeOptimizationOptions& options) {
  check_inputs(photon, control, window);
  return evaluate(project_window(photon, window, options.threads), project_window(control, window, options.threads),
                  params, window, options);
}

ModeOptimizationResult optimize_mode(const TraceMatrix& photon, const TraceMatrix& control,
                                     const TemporalModeParams& initial, const WindowFunction& window,
                                     const ModeOptimizationOptions& options) {
  check_inputs(photon, control, window);
  initial.validate();
  if (!(initial.rise_time_ns > 0.0) || !std::isfinite(initial.jpa_bandwidth_mhz)) {
    throw DomainError("mode optimization needs a finite, positive starting rise time and bandwidth");
  }
  if (!(options.initial_step_fraction > 0.0)) throw DomainError("initial step fraction must be > 0");

  const ProjectedSet p = project_window(photon, window, options.threads);
  const ProjectedSet c = project_window(control, window, options.threads);
  const optim::Objective objective = [&](const optim::Point& x) {
    try {
      return evaluate(p, c, from_log(x), window, options);
    } catch (const ResolutionError&) {
      return kInfeasible;
    } catch (const DomainError&) {
      return kInfeasible;
    } catch (const SingularityError&) {
      return kInfeasible;
    }
  };

  const optim::Point x0{std::log(initial.rise_time_ns), std::log(initial.decay_rate_khz),
                        std::log(initial.jpa_bandwidth_mhz)};
  const double step = std::log1p(options.initial_step_fraction);
  optim::NelderMeadOptions nm;
  nm.max_iterations = options.max_iterations;
  nm.f_tolerance = options.f_tolerance;
  nm.threads = options.threads;
  const auto run = optim::nelder_mead(objective, x0, {step, step, step}, nm);

  ModeOptimizationResult result;
  result.params = from_log(run.point);
  result.rho00 = run.value;
  result.iterations = run.iterations;
  result.evaluations = run.evaluations;
  result.trace.reserve(run.trace.size());
  for (const auto& s : run.trace) result.trace.push_back({s.iteration, s.best_value, from_log(s.best_point)});
  if (!run.converged) throw ModeConvergenceError("mode optimization hit the iteration cap", std::move(result));
  return result;
}

}  // namespace photonchain::temporal
