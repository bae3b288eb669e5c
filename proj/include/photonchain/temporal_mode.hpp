#pragma once

// Matched-filter extraction of one quadrature value per voltage trace.
//
// Times are in microseconds relative to the end of the drive pulse, so
// sample i sits at t = i*dt - t0. Inner products are Riemann sums
// <u, v> = sum_i u_i v_i dt; modes and windows are unit-norm under it.

#include <cstddef>
#include <span>
#include <vector>

namespace photonchain::temporal {

struct TraceGrid {
  double dt_us = 0.01;
  std::size_t n_samples = 5600;
  double t0_us = 20.0;  // drive-pulse end, measured from trace start

  TraceGrid() = default;
  TraceGrid(double dt, std::size_t n, double t0);

  double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt_us - t0_us; }
  double duration() const noexcept { return static_cast<double>(n_samples) * dt_us; }
  friend bool operator==(const TraceGrid&, const TraceGrid&) = default;
};

struct TimeInterval {
  double start_us = 0.0;
  double stop_us = 0.0;
  bool contains(double t) const noexcept { return t >= start_us && t < stop_us; }
};

struct TemporalModeParams {
  double rise_time_ns = 150.0;
  double decay_rate_khz = 410.0;     // kappa_f / 2pi
  double jpa_bandwidth_mhz = 1.526;  // Lambda / 2pi; +inf for an ideal amplifier

  /// Throws DomainError unless rise >= 0 and the two rates are > 0.
  void validate() const;
  friend bool operator==(const TemporalModeParams&, const TemporalModeParams&) = default;
};

/// Single-pole bandwidth of a JPA with the given gain-bandwidth product.
double jpa_bandwidth_from_gain(double gain_bandwidth_mhz, double gain_db);

class TemporalMode {
 public:
  TemporalMode(TraceGrid grid, std::vector<double> samples);
  const TraceGrid& grid() const noexcept { return grid_; }
  std::span<const double> samples() const noexcept { return samples_; }

 private:
  TraceGrid grid_;
  std::vector<double> samples_;
};

class WindowFunction {
 public:
  WindowFunction(TraceGrid grid, std::vector<double> samples, std::vector<TimeInterval> readouts);
  const TraceGrid& grid() const noexcept { return grid_; }
  std::span<const double> samples() const noexcept { return samples_; }
  const std::vector<TimeInterval>& readout_intervals() const noexcept { return readouts_; }

 private:
  TraceGrid grid_;
  std::vector<double> samples_;
  std::vector<TimeInterval> readouts_;
};

struct VoltageTrace {
  std::vector<double> samples;  // volts
};

/// Row-major block of traces sharing one grid.
class TraceMatrix {
 public:
  explicit TraceMatrix(TraceGrid grid) : grid_(grid) {}

  void append(std::span<const double> trace);
  std::size_t rows() const noexcept { return rows_; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * grid_.n_samples, grid_.n_samples};
  }
  const TraceGrid& grid() const noexcept { return grid_; }
  std::span<const double> data() const noexcept { return data_; }

 private:
  TraceGrid grid_;
  std::size_t rows_ = 0;
  std::vector<double> data_;
};

/// Region outside which the mode is forced to zero.
struct ModeSupport {
  double start_us = -1.0;
  double stop_us = 8.0;
};

double inner_product(std::span<const double> a, std::span<const double> b, double dt);

/// Linear ramp of length rise_time ending at t = 0, then exp(-kappa_f t / 2),
/// passed through the single-pole JPA response and normalized.
TemporalMode mode_shape(const TemporalModeParams& params, const TraceGrid& grid,
                        ModeSupport support = {});

/// Constant off the readout intervals, zero on them, unit norm.
WindowFunction background_window(const TraceGrid& grid, std::span<const TimeInterval> readouts);

/// Precomputed two-regressor least-squares solve for (V_q, V_dc).
class QuadratureExtractor {
 public:
  QuadratureExtractor(const TemporalMode& mode, const WindowFunction& window);

  /// Exact least-squares V_q in volt*sqrt(us).
  double operator()(std::span<const double> trace) const;
  /// The uncorrected form <V,f> - <V,b><b,f>.
  double first_order(std::span<const double> trace) const;

  double overlap() const noexcept { return overlap_; }
  const TraceGrid& grid() const noexcept { return grid_; }

 private:
  TraceGrid grid_;
  std::vector<double> mode_;
  std::vector<double> window_;
  std::size_t support_begin_ = 0;
  std::size_t support_end_ = 0;
  double overlap_ = 0.0;
  double denominator_ = 1.0;
};

double extract_quadrature(const VoltageTrace& trace, const TemporalMode& mode,
                          const WindowFunction& window);

}  // namespace photonchain::temporal
