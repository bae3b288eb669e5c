#pragma once

// File formats.
//
// Numeric CSVs are self-describing: a header row of column names with units
// in brackets, values printed with 17 significant digits so every double
// round-trips exactly.
//
// Trace files hold one trial per row. CSV trace files start with a
// "# grid dt_us=... n_samples=... t0_us=..." comment, then a header row of
// sample times in microseconds. Binary trace files are little-endian:
//   6 bytes  "IPTRC1"
//   u32      n_trials
//   u32      n_samples
//   f64      dt (us)
//   f64[n_trials * n_samples] samples, row-major, volts
// The binary header carries no time origin; readers take it from the caller.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "photonchain/characterization.hpp"
#include "photonchain/temporal_mode.hpp"
#include "photonchain/tomography.hpp"

namespace photonchain::io {

namespace fs = std::filesystem;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws DataError if absent
};

/// "%.17g"; non-finite values print as nan / inf / -inf.
std::string format_double(double v);
double parse_double(const std::string& s);

void write_table(const fs::path& path, const Table& table);
Table read_table(const fs::path& path);

enum class TraceFormat { csv, binary };
TraceFormat trace_format_from_string(const std::string& s);
const char* to_string(TraceFormat f) noexcept;
/// ".iptrc" and ".bin" are binary, everything else CSV.
TraceFormat trace_format_for(const fs::path& path);

/// Streams traces to disk one at a time.
class TraceWriter {
 public:
  TraceWriter(const fs::path& path, const temporal::TraceGrid& grid, TraceFormat format);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void write(std::span<const double> trace);
  /// Patches the binary trial count and flushes. Called by the destructor if needed.
  void close();
  std::size_t rows() const noexcept { return rows_; }

 private:
  fs::path path_;
  temporal::TraceGrid grid_;
  TraceFormat format_;
  std::ofstream out_;
  std::size_t rows_ = 0;
  bool closed_ = false;
};

struct TraceFileInfo {
  temporal::TraceGrid grid;
  std::size_t n_trials = 0;
  TraceFormat format = TraceFormat::csv;
};

/// Grid and trial count from the header alone. CSV trial counts are 0.
TraceFileInfo read_trace_header(const fs::path& path, double binary_t0_us = temporal::TraceGrid{}.t0_us);

/// Reads each trace in order without holding the file in memory.
TraceFileInfo for_each_trace(const fs::path& path, const std::function<void(std::span<const double>)>& fn,
                             double binary_t0_us = temporal::TraceGrid{}.t0_us);
temporal::TraceMatrix read_traces(const fs::path& path, double binary_t0_us = temporal::TraceGrid{}.t0_us);
void write_traces(const fs::path& path, const temporal::TraceMatrix& traces, TraceFormat format);

/// One quadrature per row; the unit column name records calibration.
void write_quadratures(const fs::path& path, const tomography::QuadratureDataset& data);
tomography::QuadratureDataset read_quadratures(const fs::path& path);

void write_thermal_sweep(const fs::path& path, std::span<const characterization::ThermalSweepPoint> points);
std::vector<characterization::ThermalSweepPoint> read_thermal_sweep(const fs::path& path);

void write_dephasing(const fs::path& path, std::span<const characterization::DephasingPoint> points);
std::vector<characterization::DephasingPoint> read_dephasing(const fs::path& path);

void write_residuals(const fs::path& path, std::span<const characterization::Residual> residuals,
                     const std::string& x_column, const std::string& value_column);

/// (time_us, amplitude) pairs.
void write_waveform(const fs::path& path, const temporal::TraceGrid& grid, std::span<const double> samples);
std::vector<double> read_waveform(const fs::path& path, temporal::TraceGrid& grid_out);

/// (bin_center, density, model_density).
void write_histogram(const fs::path& path, const tomography::Histogram& histogram,
                     std::span<const double> model_density);

}  // namespace photonchain::io
