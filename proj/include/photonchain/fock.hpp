#pragma once

// Fock-basis substrate: diagonal (phase-averaged) density matrices, their
// single-quadrature marginals, and the loss/thermal channels used by every
// other module. Quadrature convention: vacuum variance 1/4.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace photonchain::fock {

inline constexpr double kVacuumVariance = 0.25;
inline constexpr int kMaxMarginalPhotonNumber = 20;
inline constexpr int kDefaultNMax = 3;
inline constexpr int kSimulationNMax = 10;

/// Mean thermal photon number.
struct ThermalOccupation {
  double nbar = 0.0;

  explicit ThermalOccupation(double value = 0.0);
};

/// Per-element uncertainties carried by fitted density matrices.
struct PopulationUncertainty {
  std::vector<double> stat;    // standard deviation of the mean
  std::vector<double> sys_lo;  // lower systematic bound (population value)
  std::vector<double> sys_hi;  // upper systematic bound (population value)
};

/// Nonnegative Fock populations p_0..p_nmax summing to one.
class DiagonalDensityMatrix {
 public:
  /// Throws DomainError unless every entry is >= 0 and the sum is 1 within 1e-9.
  explicit DiagonalDensityMatrix(std::vector<double> populations);

  /// Clamps tiny negative rounding residue and renormalizes. Throws
  /// DomainError for negative entries beyond 1e-12 or a zero sum.
  static DiagonalDensityMatrix normalized(std::vector<double> weights);

  static DiagonalDensityMatrix fock(int n, int n_max);
  static DiagonalDensityMatrix vacuum(int n_max = kDefaultNMax) { return fock(0, n_max); }

  int n_max() const noexcept { return static_cast<int>(populations_.size()) - 1; }
  std::span<const double> populations() const noexcept { return populations_; }
  double operator[](int n) const noexcept;  // 0 beyond n_max
  double mean_photon_number() const noexcept;

  /// Copy zero-padded (or truncated and renormalized) to a new n_max.
  DiagonalDensityMatrix resized(int n_max) const;

  const std::optional<PopulationUncertainty>& uncertainty() const noexcept { return uncertainty_; }
  void set_uncertainty(PopulationUncertainty u);

 private:
  std::vector<double> populations_;
  std::optional<PopulationUncertainty> uncertainty_;
};

/// P_n(x) for a Fock state, from the normalized Hermite-function recurrence.
double fock_marginal_pdf(int n, double x);

/// All of P_0(x)..P_nmax(x) in one recurrence pass; `out` must hold n_max+1.
void fock_marginal_pdfs(double x, std::span<double> out);

/// sum_n rho_n P_n(x).
double mixture_pdf(const DiagonalDensityMatrix& rho, double x);

/// Binomial photon loss with the given transmissivity.
DiagonalDensityMatrix loss_channel(const DiagonalDensityMatrix& rho, double transmissivity);

/// Geometric populations nbar^n/(nbar+1)^(n+1), truncated at n_max and renormalized.
DiagonalDensityMatrix thermal_state(ThermalOccupation nbar, int n_max);

/// Thermal state with n_max chosen so the truncated tail is below 1e-9.
DiagonalDensityMatrix thermal_state(ThermalOccupation nbar);

/// Photon-number distribution of the sum of two independent photon numbers.
DiagonalDensityMatrix add_photon_numbers(const DiagonalDensityMatrix& a,
                                         const DiagonalDensityMatrix& b, int n_max);

/// Uhlmann fidelity for commuting states: sum_n sqrt(a_n b_n).
double fidelity_diagonal(const DiagonalDensityMatrix& a, const DiagonalDensityMatrix& b);

/// Full zero-delay correlation sum n(n-1)p_n / (sum n p_n)^2.
double g2_zero(const DiagonalDensityMatrix& rho);

/// Two-photon shorthand 2 p_2 / p_1.
double g2_two_photon_shorthand(const DiagonalDensityMatrix& rho);

/// {1 - (kout/k) eta, (kout/k) eta, 0, ...}.
DiagonalDensityMatrix expected_measured_state(double kappa, double kappa_out, double eta_m,
                                              int n_max = 1);

/// Flat key-value record: n_max, p0..pN, and stat/sys_lo/sys_hi when present.
std::vector<std::pair<std::string, double>> to_record(const DiagonalDensityMatrix& rho);
DiagonalDensityMatrix from_record(const std::vector<std::pair<std::string, double>>& record);

}  // namespace photonchain::fock
