#include "photonchain/temporal_mode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "photonchain/errors.hpp"

namespace photonchain::temporal {

TraceGrid::TraceGrid(double dt, std::size_t n, double t0) : dt_us(dt), n_samples(n), t0_us(t0) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("grid dt must be > 0");
  if (n == 0) throw DomainError("grid needs at least one sample");
  if (!std::isfinite(t0)) throw DomainError("grid t0 must be finite");
}

void TemporalModeParams::validate() const {
  if (!(rise_time_ns >= 0.0) || !std::isfinite(rise_time_ns)) throw DomainError("rise time must be >= 0");
  if (!(decay_rate_khz > 0.0) || !std::isfinite(decay_rate_khz)) throw DomainError("decay rate must be > 0");
  if (!(jpa_bandwidth_mhz > 0.0)) throw DomainError("JPA bandwidth must be > 0");
}

double jpa_bandwidth_from_gain(double gain_bandwidth_mhz, double gain_db) {
  // Gain-bandwidth product is quoted for amplitude gain.
  return gain_bandwidth_mhz / std::sqrt(std::pow(10.0, gain_db / 10.0));
}

TemporalMode::TemporalMode(TraceGrid grid, std::vector<double> samples)
    : grid_(grid), samples_(std::move(samples)) {
  if (samples_.size() != grid_.n_samples) throw DomainError("mode length does not match grid");
}

WindowFunction::WindowFunction(TraceGrid grid, std::vector<double> samples,
                               std::vector<TimeInterval> readouts)
    : grid_(grid), samples_(std::move(samples)), readouts_(std::move(readouts)) {
  if (samples_.size() != grid_.n_samples) throw DomainError("window length does not match grid");
}

void TraceMatrix::append(std::span<const double> trace) {
  if (trace.size() != grid_.n_samples) throw DataError("trace length does not match the matrix grid");
  data_.insert(data_.end(), trace.begin(), trace.end());
  ++rows_;
}

double inner_product(std::span<const double> a, std::span<const double> b, double dt) {
  if (a.size() != b.size()) throw DomainError("inner product of differently sized vectors");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) * dt;
}

TemporalMode mode_shape(const TemporalModeParams& params, const TraceGrid& grid, ModeSupport support) {
  params.validate();
  const double kappa = 2.0 * std::numbers::pi * params.decay_rate_khz * 1e-3;  // rad/us
  const double lambda = 2.0 * std::numbers::pi * params.jpa_bandwidth_mhz;    // rad/us
  const double rise_us = params.rise_time_ns * 1e-3;
  const double dt = grid.dt_us;
  if (0.5 * kappa * dt > 0.1) {
    throw ResolutionError("grid dt does not resolve the mode decay (kappa_f dt / 2 > 0.1)");
  }

  std::vector<double> f(grid.n_samples, 0.0);
  // Exact response of h(t) = L exp(-L t) to a piecewise-constant input.
  const double pole = std::isinf(lambda) ? 0.0 : std::exp(-lambda * dt);
  double state = 0.0;
  for (std::size_t i = 0; i < grid.n_samples; ++i) {
    const double t = grid.time(i);
    double ideal = 0.0;
    if (t >= 0.0) {
      ideal = std::exp(-0.5 * kappa * t);
    } else if (rise_us > 0.0 && t >= -rise_us) {
      ideal = (t + rise_us) / rise_us;
    }
    state = pole * state + (1.0 - pole) * ideal;
    f[i] = state;
  }

  std::size_t support_samples = 0;
  for (std::size_t i = 0; i < grid.n_samples; ++i) {
    const double t = grid.time(i);
    if (t < support.start_us || t >= support.stop_us) {
      f[i] = 0.0;
    } else {
      ++support_samples;
    }
  }
  if (support_samples < 2) throw ResolutionError("mode support holds fewer than two samples");

  const double norm = std::sqrt(inner_product(f, f, dt));
  if (!(norm > 0.0)) throw ResolutionError("mode vanishes on its support");
  for (double& v : f) v /= norm;
  return TemporalMode(grid, std::move(f));
}

WindowFunction background_window(const TraceGrid& grid, std::span<const TimeInterval> readouts) {
  std::vector<double> b(grid.n_samples, 0.0);
  std::size_t active = 0;
  for (std::size_t i = 0; i < grid.n_samples; ++i) {
    const double t = grid.time(i);
    const bool in_readout =
        std::any_of(readouts.begin(), readouts.end(), [t](const TimeInterval& r) { return r.contains(t); });
    if (!in_readout) {
      b[i] = 1.0;
      ++active;
    }
  }
  if (active == 0) throw DomainError("readout intervals cover the entire grid: empty background window");
  const double value = 1.0 / std::sqrt(static_cast<double>(active) * grid.dt_us);
  for (double& v : b) v *= value;
  return WindowFunction(grid, std::move(b), {readouts.begin(), readouts.end()});
}

QuadratureExtractor::QuadratureExtractor(const TemporalMode& mode, const WindowFunction& window)
    : grid_(mode.grid()),
      mode_(mode.samples().begin(), mode.samples().end()),
      window_(window.samples().begin(), window.samples().end()) {
  if (!(mode.grid() == window.grid())) throw DomainError("mode and window grids differ");
  const auto first = std::find_if(mode_.begin(), mode_.end(), [](double v) { return v != 0.0; });
  const auto last = std::find_if(mode_.rbegin(), mode_.rend(), [](double v) { return v != 0.0; });
  support_begin_ = static_cast<std::size_t>(first - mode_.begin());
  support_end_ = static_cast<std::size_t>(mode_.rend() - last);
  overlap_ = inner_product(mode_, window_, grid_.dt_us);
  denominator_ = 1.0 - overlap_ * overlap_;
  if (!(std::abs(denominator_) > 1e-12)) {
    throw SingularityError("mode and background window are linearly dependent");
  }
}

double QuadratureExtractor::first_order(std::span<const double> trace) const {
  if (trace.size() != grid_.n_samples) throw DataError("trace length does not match the extraction grid");
  double on_mode = 0.0;
  for (std::size_t i = support_begin_; i < support_end_; ++i) on_mode += trace[i] * mode_[i];
  on_mode *= grid_.dt_us;
  const double on_window = inner_product(trace, window_, grid_.dt_us);
  return on_mode - on_window * overlap_;
}

double QuadratureExtractor::operator()(std::span<const double> trace) const {
  return first_order(trace) / denominator_;
}

double extract_quadrature(const VoltageTrace& trace, const TemporalMode& mode, const WindowFunction& window) {
  return QuadratureExtractor(mode, window)(trace.samples);
}

}  // namespace photonchain::temporal
