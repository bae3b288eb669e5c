#include "photonchain/characterization.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>

#include "photonchain/errors.hpp"

namespace photonchain::characterization {

namespace {

// h / k_B in kelvin per hertz.
constexpr double kPlanckOverBoltzmann = 4.799243073366221e-11;

Covariance2 to_covariance(const Eigen::Matrix2d& m) {
  return {{{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}};
}

bool all_sigmas_known(std::span<const double> sigmas) {
  return !sigmas.empty() && std::all_of(sigmas.begin(), sigmas.end(), [](double s) { return s > 0.0; });
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

fock::ThermalOccupation nbar_from_gain(double isolation_l, double gain_db) {
  if (!(gain_db >= 0.0)) throw DomainError("gain must be >= 0 dB");
  if (!(isolation_l >= 0.0)) throw DomainError("isolation must be >= 0");
  return fock::ThermalOccupation(0.25 * isolation_l * (db_to_linear(gain_db) - 1.0));
}

fock::ThermalOccupation nbar_from_gain(const BackactionModel& model, double gain_db) {
  return nbar_from_gain(std::max(0.0, model.isolation_l), gain_db);
}

double nbar_error(const BackactionModel& model, double gain_db) {
  return 0.25 * model.isolation_err() * (db_to_linear(gain_db) - 1.0);
}

double dephasing_rate_khz(double isolation_l, double gamma0_khz, double kappa_khz, double gain_db) {
  const double nbar = 0.25 * isolation_l * (db_to_linear(gain_db) - 1.0);
  return gamma0_khz + kappa_khz * (2.0 * nbar + 2.0 * nbar * nbar);
}

BackactionModel fit_dephasing(std::span<const DephasingPoint> data, double kappa_khz) {
  if (data.size() < 3) throw FitError("dephasing fit needs at least three gain points");
  if (!(kappa_khz > 0.0)) throw DomainError("kappa must be > 0");

  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<double> sigmas;
  for (const auto& p : data) sigmas.push_back(p.sigma_khz);
  const bool weighted = all_sigmas_known(sigmas);

  Eigen::VectorXd leak(n), gamma(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = data[static_cast<std::size_t>(i)];
    leak(i) = 0.25 * (db_to_linear(p.gain_db) - 1.0);  // nbar per unit L
    gamma(i) = p.gamma_khz;
    w(i) = weighted ? 1.0 / (p.sigma_khz * p.sigma_khz) : 1.0;
  }

  // Linear start: drop the quadratic term.
  Eigen::MatrixXd x0(n, 2);
  x0.col(0) = 2.0 * kappa_khz * leak;
  x0.col(1).setOnes();
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::Vector2d theta = (sw.asDiagonal() * x0).colPivHouseholderQr().solve(sw.asDiagonal() * gamma);

  Eigen::MatrixXd jac(n, 2);
  Eigen::VectorXd resid(n);
  const auto evaluate = [&](const Eigen::Vector2d& th) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double nbar = th(0) * leak(i);
      resid(i) = gamma(i) - (th(1) + kappa_khz * (2.0 * nbar + 2.0 * nbar * nbar));
      jac(i, 0) = kappa_khz * (2.0 + 4.0 * nbar) * leak(i);
      jac(i, 1) = 1.0;
    }
  };

  bool converged = false;
  for (int iter = 0; iter < 200 && !converged; ++iter) {
    evaluate(theta);
    const Eigen::Vector2d step =
        (sw.asDiagonal() * jac).colPivHouseholderQr().solve(sw.asDiagonal() * resid);
    theta += step;
    if (!step.allFinite()) break;
    converged = std::abs(step(0)) <= 1e-12 * std::max(std::abs(theta(0)), 1e-12) &&
                std::abs(step(1)) <= 1e-12 * std::max(std::abs(theta(1)), 1e-9);
  }
  if (!converged || !theta.allFinite()) throw FitError("dephasing fit did not converge");
  evaluate(theta);

  const Eigen::Matrix2d normal = jac.transpose() * w.asDiagonal() * jac;
  Eigen::Matrix2d cov = normal.inverse();
  if (!weighted) {
    const double dof = static_cast<double>(n) - 2.0;
    cov *= resid.squaredNorm() / dof;
  }

  BackactionModel model;
  model.isolation_l = theta(0);
  model.gamma0_khz = theta(1);
  model.kappa_khz = kappa_khz;
  model.covariance = to_covariance(cov);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.residuals.push_back({data[static_cast<std::size_t>(i)].gain_db, gamma(i), gamma(i) - resid(i)});
  }
  const auto significantly_negative = [](double v, double err) { return v < -std::max(3.0 * err, 1e-12); };
  if (significantly_negative(model.isolation_l, model.isolation_err()) ||
      significantly_negative(model.gamma0_khz, model.gamma0_err())) {
    throw FitError("dephasing fit converged to negative parameters");
  }
  return model;
}

double planck_occupation(double temperature_mk, double frequency_ghz) {
  if (!(temperature_mk > 0.0)) throw DomainError("temperature must be > 0");
  if (!(frequency_ghz > 0.0)) throw DomainError("frequency must be > 0");
  const double x = kPlanckOverBoltzmann * frequency_ghz * 1e9 / (temperature_mk * 1e-3);
  return 1.0 / std::expm1(x) + 0.5;
}

std::vector<GainNoiseFit> fit_thermal_sweep(std::span<const ThermalSweepPoint> points) {
  std::map<double, std::vector<ThermalSweepPoint>> by_gain;
  for (const auto& p : points) by_gain[p.gain_db].push_back(p);
  if (by_gain.empty()) throw FitError("thermal sweep is empty");

  std::vector<GainNoiseFit> fits;
  for (const auto& [gain_db, pts] : by_gain) {
    if (pts.size() < 3) throw FitError("thermal sweep needs at least three temperatures per gain");
    const double count = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
      mx += p.s_in;
      my += p.s_out;
    }
    mx /= count;
    my /= count;
    double sxx = 0.0, sxy = 0.0, sxx_raw = 0.0;
    for (const auto& p : pts) {
      sxx += (p.s_in - mx) * (p.s_in - mx);
      sxy += (p.s_in - mx) * (p.s_out - my);
      sxx_raw += p.s_in * p.s_in;
    }
    if (!(sxx > 1e-12 * sxx_raw)) throw FitError("thermal sweep input spread is degenerate");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    if (!(slope > 0.0)) throw FitError("thermal sweep has non-positive chain gain");

    GainNoiseFit fit;
    fit.gain_db = gain_db;
    double ssr = 0.0;
    for (const auto& p : pts) {
      const double model = intercept + slope * p.s_in;
      ssr += (p.s_out - model) * (p.s_out - model);
      fit.residuals.push_back({p.s_in, p.s_out, model});
    }
    const double s2 = pts.size() > 2 ? ssr / (count - 2.0) : 0.0;
    const double var_b = s2 / sxx;
    const double var_a = s2 * (1.0 / count + mx * mx / sxx);
    const double cov_ab = -mx * s2 / sxx;
    fit.chain_gain = slope;
    fit.chain_gain_err = std::sqrt(var_b);
    fit.n_add = intercept / slope;
    const double b2 = slope * slope;
    const double var_n = var_a / b2 + intercept * intercept * var_b / (b2 * b2) - 2.0 * intercept * cov_ab / (b2 * slope);
    fit.n_add_err = std::sqrt(std::max(0.0, var_n));
    fits.push_back(std::move(fit));
  }
  return fits;
}

double AddedNoiseModel::n_add_err(double gain_db) const {
  const double inv_g = 1.0 / db_to_linear(gain_db);
  const double var = covariance[0][0] + 2.0 * covariance[0][1] * inv_g + covariance[1][1] * inv_g * inv_g;
  return std::sqrt(std::max(0.0, var));
}

AddedNoiseModel fit_added_noise_model(std::span<const GainNoiseFit> per_gain) {
  std::vector<double> gains;
  for (const auto& p : per_gain) gains.push_back(p.gain_db);
  std::sort(gains.begin(), gains.end());
  if (std::unique(gains.begin(), gains.end()) - gains.begin() < 2) {
    throw FitError("added-noise model is underdetermined: need at least two distinct gains");
  }

  const auto n = static_cast<Eigen::Index>(per_gain.size());
  std::vector<double> sigmas;
  for (const auto& p : per_gain) sigmas.push_back(p.n_add_err);
  const bool weighted = all_sigmas_known(sigmas);

  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = per_gain[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, 1) = 1.0 / db_to_linear(p.gain_db);
    y(i) = p.n_add;
    w(i) = weighted ? 1.0 / (p.n_add_err * p.n_add_err) : 1.0;
  }
  const Eigen::Matrix2d normal = x.transpose() * w.asDiagonal() * x;
  const Eigen::Vector2d theta = normal.ldlt().solve(x.transpose() * w.asDiagonal() * y);
  Eigen::Matrix2d cov = normal.inverse();
  if (!weighted) {
    const double dof = static_cast<double>(n) - 2.0;
    cov = dof > 0.0 ? Eigen::Matrix2d(cov * (y - x * theta).squaredNorm() / dof) : Eigen::Matrix2d::Zero();
  }

  AddedNoiseModel model;
  model.n_jpa = theta(0);
  model.n_hemt = theta(1);
  model.covariance = to_covariance(cov);
  model.per_gain.assign(per_gain.begin(), per_gain.end());
  return model;
}

double efficiency_from_added_noise(double n_add) {
  if (!(n_add >= 0.0)) throw DomainError("added noise must be >= 0");
  return 1.0 / (2.0 * n_add + 1.0);
}

EfficiencyCurve::EfficiencyCurve(AddedNoiseModel model, double min_gain_db, double max_gain_db)
    : model_(std::move(model)), min_gain_db_(min_gain_db), max_gain_db_(max_gain_db) {
  if (!(min_gain_db <= max_gain_db)) throw DomainError("efficiency curve range is empty");
}

EfficiencyPoint EfficiencyCurve::at(double gain_db) const {
  if (gain_db < min_gain_db_ - 1e-9 || gain_db > max_gain_db_ + 1e-9) {
    throw DomainError("gain " + std::to_string(gain_db) + " dB outside the efficiency curve range");
  }
  const double n_add = model_.n_add(gain_db);
  const double eta = efficiency_from_added_noise(std::max(0.0, n_add));
  return {gain_db, eta, 2.0 * eta * eta * model_.n_add_err(gain_db)};
}

std::vector<EfficiencyPoint> EfficiencyCurve::sample(double step_db) const {
  if (!(step_db > 0.0)) throw DomainError("step must be > 0");
  std::vector<EfficiencyPoint> out;
  const auto steps = static_cast<int>(std::floor((max_gain_db_ - min_gain_db_) / step_db + 1e-9));
  for (int i = 0; i <= steps; ++i) out.push_back(at(min_gain_db_ + step_db * i));
  return out;
}

EfficiencyCurve efficiency_curve(const AddedNoiseModel& model, double min_gain_db, double max_gain_db) {
  return EfficiencyCurve(model, min_gain_db, max_gain_db);
}

ComparisonReport compare_to_expectation(const tomography::ReconstructionResult& measured, double kappa_khz,
                                        double kappa_out_khz, const EfficiencyCurve& curve, double gain_db) {
  const EfficiencyPoint eff = curve.at(gain_db);
  ComparisonReport report;
  report.gain_db = gain_db;
  report.eta = eff.eta;
  report.eta_err = eff.eta_err;
  report.escape_ratio = kappa_out_khz / kappa_khz;
  report.rho_expected = fock::expected_measured_state(kappa_khz, kappa_out_khz, eff.eta);

  auto& fe = report.fidelity_expected;
  fe.value = fock::fidelity_diagonal(measured.rho, report.rho_expected);
  std::vector<double> per_set;
  for (const auto& s : measured.per_set_squeezed) per_set.push_back(fock::fidelity_diagonal(s, report.rho_expected));
  fe.stat = standard_error(per_set);
  fe.sys_lo = fe.sys_hi = fe.value;
  for (const auto* rho : {&measured.rho, &measured.rho_amplified}) {
    for (double eta : {eff.eta - eff.eta_err, eff.eta, eff.eta + eff.eta_err}) {
      const auto expected = fock::expected_measured_state(kappa_khz, kappa_out_khz, std::clamp(eta, 0.0, 1.0));
      const double f = fock::fidelity_diagonal(*rho, expected);
      fe.sys_lo = std::min(fe.sys_lo, f);
      fe.sys_hi = std::max(fe.sys_hi, f);
    }
  }

  const auto summary = tomography::summarize(measured);
  report.fidelity_ideal = summary.fidelity_vs_fock1;
  report.g2 = summary.g2;
  return report;
}

}  // namespace photonchain::characterization
