#pragma once

// Data-driven choice of the temporal mode: the (rise, decay, bandwidth)
// triple that minimizes the reconstructed zero-photon population on
// held-out photon/control trace sets.

#include <string>
#include <vector>

#include "photonchain/errors.hpp"
#include "photonchain/fock.hpp"
#include "photonchain/temporal_mode.hpp"

namespace photonchain::temporal {

struct ModeOptimizationOptions {
  int n_max = fock::kDefaultNMax;
  double nbar_backaction = 0.0;  // squeezed-assumption calibration uses 1/4 regardless
  int max_iterations = 500;
  double f_tolerance = 1e-4;
  double initial_step_fraction = 0.1;
  ModeSupport support{};
  unsigned threads = 0;
};

struct ModeOptimizationStep {
  int iteration = 0;
  double rho00 = 0.0;
  TemporalModeParams params;
};

struct ModeOptimizationResult {
  TemporalModeParams params;
  double rho00 = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::vector<ModeOptimizationStep> trace;
};

class ModeConvergenceError : public ConvergenceError {
 public:
  ModeConvergenceError(const std::string& what, ModeOptimizationResult best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const ModeOptimizationResult& best() const noexcept { return best_; }

 private:
  ModeOptimizationResult best_;
};

/// rho_00 reconstructed from the two sets with the given mode parameters.
double zero_photon_population(const TraceMatrix& photon, const TraceMatrix& control,
                              const TemporalModeParams& params, const WindowFunction& window,
                              const ModeOptimizationOptions& options = {});

/// Simplex search in log-parameter space from `initial` with a starting
/// simplex of initial_step_fraction of each value. Throws
/// ModeConvergenceError with the best point at the iteration cap.
ModeOptimizationResult optimize_mode(const TraceMatrix& photon, const TraceMatrix& control,
                                     const TemporalModeParams& initial, const WindowFunction& window,
                                     const ModeOptimizationOptions& options = {});

}  // namespace photonchain::temporal
