#include "photonchain/fock.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "photonchain/errors.hpp"

namespace photonchain::fock {

namespace {

constexpr double kNormTolerance = 1e-9;

void check_photon_number(int n) {
  if (n < 0 || n > kMaxMarginalPhotonNumber) {
    throw DomainError("photon number " + std::to_string(n) + " outside supported range [0, " +
                      std::to_string(kMaxMarginalPhotonNumber) + "]");
  }
}

double binomial_coefficient(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

ThermalOccupation::ThermalOccupation(double value) : nbar(value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw DomainError("thermal occupation must be finite and >= 0");
  }
}

DiagonalDensityMatrix::DiagonalDensityMatrix(std::vector<double> populations)
    : populations_(std::move(populations)) {
  if (populations_.empty()) throw DomainError("density matrix needs at least one population");
  double sum = 0.0;
  for (double p : populations_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("populations must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw DomainError("populations sum to " + std::to_string(sum) + ", expected 1");
  }
}

DiagonalDensityMatrix DiagonalDensityMatrix::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double& w : weights) {
    if (!std::isfinite(w) || w < -1e-12) throw DomainError("weights must be finite and >= 0");
    w = std::max(w, 0.0);
    sum += w;
  }
  if (!(sum > 0.0)) throw DomainError("weights sum to zero");
  for (double& w : weights) w /= sum;
  return DiagonalDensityMatrix(std::move(weights));
}

DiagonalDensityMatrix DiagonalDensityMatrix::fock(int n, int n_max) {
  if (n < 0 || n > n_max) throw DomainError("Fock index outside basis");
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
  p[static_cast<std::size_t>(n)] = 1.0;
  return DiagonalDensityMatrix(std::move(p));
}

double DiagonalDensityMatrix::operator[](int n) const noexcept {
  if (n < 0 || n > n_max()) return 0.0;
  return populations_[static_cast<std::size_t>(n)];
}

double DiagonalDensityMatrix::mean_photon_number() const noexcept {
  double m = 0.0;
  for (std::size_t n = 0; n < populations_.size(); ++n) m += static_cast<double>(n) * populations_[n];
  return m;
}

DiagonalDensityMatrix DiagonalDensityMatrix::resized(int n_max) const {
  if (n_max < 0) throw DomainError("n_max must be >= 0");
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
  for (int n = 0; n <= std::min(n_max, this->n_max()); ++n) p[n] = populations_[n];
  return normalized(std::move(p));
}

void DiagonalDensityMatrix::set_uncertainty(PopulationUncertainty u) {
  const auto size = populations_.size();
  if (u.stat.size() != size || u.sys_lo.size() != size || u.sys_hi.size() != size) {
    throw DomainError("uncertainty vectors must match the population count");
  }
  uncertainty_ = std::move(u);
}

void fock_marginal_pdfs(double x, std::span<double> out) {
  if (out.empty()) return;
  const int n_max = static_cast<int>(out.size()) - 1;
  check_photon_number(n_max);

  // Normalized oscillator eigenfunctions phi_n(y), y = sqrt(2) x; each step
  // stays O(1) so nothing overflows.
  const double y = std::numbers::sqrt2 * x;
  double prev = 0.0;
  double cur = std::exp(-0.5 * y * y) / std::sqrt(std::sqrt(std::numbers::pi));
  out[0] = std::numbers::sqrt2 * cur * cur;
  for (int n = 0; n < n_max; ++n) {
    const double next = std::sqrt(2.0 / (n + 1)) * y * cur - std::sqrt(static_cast<double>(n) / (n + 1)) * prev;
    prev = cur;
    cur = next;
    out[n + 1] = std::numbers::sqrt2 * cur * cur;
  }
}

double fock_marginal_pdf(int n, double x) {
  check_photon_number(n);
  std::vector<double> values(static_cast<std::size_t>(n) + 1);
  fock_marginal_pdfs(x, values);
  return values.back();
}

double mixture_pdf(const DiagonalDensityMatrix& rho, double x) {
  std::vector<double> values(static_cast<std::size_t>(rho.n_max()) + 1);
  fock_marginal_pdfs(x, values);
  const auto p = rho.populations();
  return std::inner_product(p.begin(), p.end(), values.begin(), 0.0);
}

DiagonalDensityMatrix loss_channel(const DiagonalDensityMatrix& rho, double transmissivity) {
  if (!(transmissivity >= 0.0 && transmissivity <= 1.0)) {
    throw DomainError("transmissivity must lie in [0, 1]");
  }
  const int n_max = rho.n_max();
  const double t = transmissivity;
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  for (int n = 0; n <= n_max; ++n) {
    const double pn = rho[n];
    if (pn == 0.0) continue;
    for (int m = 0; m <= n; ++m) {
      out[m] += binomial_coefficient(n, m) * std::pow(t, m) * std::pow(1.0 - t, n - m) * pn;
    }
  }
  return DiagonalDensityMatrix::normalized(std::move(out));
}

DiagonalDensityMatrix thermal_state(ThermalOccupation nbar, int n_max) {
  if (n_max < 0) throw DomainError("n_max must be >= 0");
  const double ratio = nbar.nbar / (nbar.nbar + 1.0);
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1);
  double term = 1.0 / (nbar.nbar + 1.0);
  for (auto& v : p) {
    v = term;
    term *= ratio;
  }
  return DiagonalDensityMatrix::normalized(std::move(p));
}

DiagonalDensityMatrix thermal_state(ThermalOccupation nbar) {
  const double ratio = nbar.nbar / (nbar.nbar + 1.0);
  int n_max = 0;
  // Tail beyond n_max is ratio^(n_max+1).
  double tail = ratio;
  while (tail >= 1e-9 && n_max < 400) {
    tail *= ratio;
    ++n_max;
  }
  return thermal_state(nbar, n_max);
}

DiagonalDensityMatrix add_photon_numbers(const DiagonalDensityMatrix& a,
                                         const DiagonalDensityMatrix& b, int n_max) {
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  for (int i = 0; i <= a.n_max(); ++i) {
    for (int j = 0; j <= b.n_max() && i + j <= n_max; ++j) out[i + j] += a[i] * b[j];
  }
  return DiagonalDensityMatrix::normalized(std::move(out));
}

double fidelity_diagonal(const DiagonalDensityMatrix& a, const DiagonalDensityMatrix& b) {
  const int n_max = std::max(a.n_max(), b.n_max());
  double f = 0.0;
  for (int n = 0; n <= n_max; ++n) f += std::sqrt(a[n] * b[n]);
  return std::clamp(f, 0.0, 1.0);
}

double g2_zero(const DiagonalDensityMatrix& rho) {
  double mean = 0.0;
  double factorial_moment = 0.0;
  for (int n = 0; n <= rho.n_max(); ++n) {
    mean += n * rho[n];
    factorial_moment += n * (n - 1.0) * rho[n];
  }
  if (!(mean > 0.0)) throw UndefinedValueError("g2(0) undefined for zero mean photon number");
  return factorial_moment / (mean * mean);
}

double g2_two_photon_shorthand(const DiagonalDensityMatrix& rho) {
  if (!(rho[1] > 0.0)) throw UndefinedValueError("2 p2 / p1 undefined for p1 = 0");
  return 2.0 * rho[2] / rho[1];
}

DiagonalDensityMatrix expected_measured_state(double kappa, double kappa_out, double eta_m,
                                              int n_max) {
  if (!(kappa_out > 0.0 && kappa_out <= kappa)) throw DomainError("need 0 < kappa_out <= kappa");
  if (!(eta_m >= 0.0 && eta_m <= 1.0)) throw DomainError("efficiency must lie in [0, 1]");
  if (n_max < 1) throw DomainError("n_max must be >= 1");
  const double one = kappa_out / kappa * eta_m;
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
  p[0] = 1.0 - one;
  p[1] = one;
  return DiagonalDensityMatrix(std::move(p));
}

std::vector<std::pair<std::string, double>> to_record(const DiagonalDensityMatrix& rho) {
  std::vector<std::pair<std::string, double>> rec;
  rec.emplace_back("n_max", rho.n_max());
  const auto emit = [&](const std::string& prefix, std::span<const double> v) {
    for (std::size_t n = 0; n < v.size(); ++n) rec.emplace_back(prefix + std::to_string(n), v[n]);
  };
  emit("p", rho.populations());
  if (const auto& u = rho.uncertainty()) {
    emit("stat", u->stat);
    emit("sys_lo", u->sys_lo);
    emit("sys_hi", u->sys_hi);
  }
  return rec;
}

DiagonalDensityMatrix from_record(const std::vector<std::pair<std::string, double>>& record) {
  const std::map<std::string, double> fields(record.begin(), record.end());
  const auto n_max_it = fields.find("n_max");
  if (n_max_it == fields.end()) throw DomainError("record missing n_max");
  const int n_max = static_cast<int>(n_max_it->second);
  if (n_max < 0 || n_max_it->second != n_max) throw DomainError("record n_max invalid");

  const auto read = [&](const std::string& prefix, bool required) -> std::optional<std::vector<double>> {
    std::vector<double> v;
    for (int n = 0; n <= n_max; ++n) {
      const auto it = fields.find(prefix + std::to_string(n));
      if (it == fields.end()) {
        if (required || n > 0) throw DomainError("record missing " + prefix + std::to_string(n));
        return std::nullopt;
      }
      v.push_back(it->second);
    }
    return v;
  };

  DiagonalDensityMatrix rho(*read("p", true));
  auto stat = read("stat", false);
  auto lo = read("sys_lo", false);
  auto hi = read("sys_hi", false);
  if (stat && lo && hi) rho.set_uncertainty({std::move(*stat), std::move(*lo), std::move(*hi)});
  return rho;
}

}  // namespace photonchain::fock
