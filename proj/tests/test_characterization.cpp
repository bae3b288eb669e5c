#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "photonchain/characterization.hpp"
#include "photonchain/config.hpp"
#include "photonchain/errors.hpp"
#include "photonchain/simulator.hpp"
#include "support/generators.hpp"

using namespace photonchain;
using namespace photonchain::characterization;
using fock::DiagonalDensityMatrix;

namespace {

std::vector<double> dephasing_gains() { return config::even_grid(17.0, 33.0, 9); }

std::vector<DephasingPoint> noiseless_dephasing(double l, double gamma0, double kappa, double sigma = 0.0) {
  std::vector<DephasingPoint> out;
  for (double g : dephasing_gains()) out.push_back({g, dephasing_rate_khz(l, gamma0, kappa, g), sigma});
  return out;
}

std::vector<ThermalSweepPoint> noiseless_sweep(double gain_db, double chain_gain, double n_add) {
  std::vector<ThermalSweepPoint> out;
  for (double t : {79.0, 150.0, 250.0, 400.0, 600.0, 900.0}) {
    const double s = planck_occupation(t, 5.8);
    out.push_back({gain_db, t, s, chain_gain * (s + n_add)});
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

tomography::ReconstructionResult result_from(const DiagonalDensityMatrix& rho, const DiagonalDensityMatrix& alt) {
  return {rho, alt, {0, 0}, {0, 0}, {0, 0}, {rho, rho}, {alt, alt}, {}, 2, 0.0};
}

}  // namespace

TEST_CASE("backaction occupation examples") {
  CHECK(nbar_from_gain(2.1e-4, 0.0).nbar == 0.0);
  CHECK(nbar_from_gain(2.1e-4, 29.0).nbar == doctest::Approx(0.0416497323230248).epsilon(1e-13));
  CHECK(nbar_from_gain(4.2e-4, 29.0).nbar == doctest::Approx(2.0 * nbar_from_gain(2.1e-4, 29.0).nbar));
  CHECK(dephasing_rate_khz(2.1e-4, 40.0, 410.0, 29.0) == doctest::Approx(75.5752346709956).epsilon(1e-13));
  CHECK_THROWS_AS(nbar_from_gain(2.1e-4, -1.0), DomainError);
  CHECK_THROWS_AS(nbar_from_gain(-1e-4, 10.0), DomainError);
  BackactionModel m;
  m.isolation_l = 2.1e-4;
  m.covariance = {{{1e-10, 0.0}, {0.0, 4.0}}};
  CHECK(nbar_error(m, 29.0) == doctest::Approx(1e-5 * 0.25 * (794.328234724282 - 1.0)));
}

TEST_CASE("dephasing fit: noiseless recovery, weighted and unweighted") {
  for (double sigma : {0.0, 2.0}) {
    const auto m = fit_dephasing(noiseless_dephasing(2.1e-4, 40.0, 410.0, sigma), 410.0);
    CHECK(m.isolation_l == doctest::Approx(2.1e-4).epsilon(1e-8));
    CHECK(m.gamma0_khz == doctest::Approx(40.0).epsilon(1e-8));
    CHECK(m.kappa_khz == 410.0);
    REQUIRE(m.residuals.size() == 9);
    for (const auto& r : m.residuals) CHECK(r.observed - r.model == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  }
}

TEST_CASE("dephasing fit: flat data gives isolation consistent with zero") {
  const auto m = fit_dephasing(noiseless_dephasing(0.0, 40.0, 410.0, 2.0), 410.0);
  CHECK(std::abs(m.isolation_l) <= 2.0 * m.isolation_err());
  CHECK(m.isolation_err() > 0.0);
}

TEST_CASE("dephasing fit is covariant under a common rate scale") {
  testgen::for_cases(10, 51, [](testgen::Gen& gen, int) {
    const double l = gen.uniform(1e-5, 5e-4);
    const auto base = sim::simulate_dephasing_data(dephasing_gains(), l, 40.0, 410.0, 0.05, gen.engine()());
    const double c = gen.uniform(0.1, 10.0);
    auto scaled = base;
    for (auto& p : scaled) {
      p.gamma_khz *= c;
      p.sigma_khz *= c;
    }
    const auto a = fit_dephasing(base, 410.0);
    const auto b = fit_dephasing(scaled, 410.0 * c);
    CHECK(b.isolation_l == doctest::Approx(a.isolation_l).epsilon(1e-9));
    CHECK(b.gamma0_khz == doctest::Approx(c * a.gamma0_khz).epsilon(1e-9));
  });
}

TEST_CASE("dephasing fit errors") {
  auto data = noiseless_dephasing(2.1e-4, 40.0, 410.0);
  data.resize(2);
  CHECK_THROWS_AS(fit_dephasing(data, 410.0), FitError);
  CHECK_THROWS_AS(fit_dephasing(noiseless_dephasing(2.1e-4, 40.0, 410.0), 0.0), DomainError);
  // Rates falling steeply with gain need a strongly negative isolation.
  auto falling = noiseless_dephasing(2.1e-4, 40.0, 410.0, 0.5);
  for (auto& p : falling) p.gamma_khz = 200.0 - 4.0 * p.gain_db;
  CHECK_THROWS_AS(fit_dephasing(falling, 410.0), FitError);
}

TEST_CASE("dephasing recovery study at 5% scatter") {
  std::vector<double> el, eg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = fit_dephasing(sim::simulate_dephasing_data(dephasing_gains(), 2.1e-4, 40.0, 410.0, 0.05, seed), 410.0);
    el.push_back(std::abs(m.isolation_l / 2.1e-4 - 1.0));
    eg.push_back(std::abs(m.gamma0_khz / 40.0 - 1.0));
  }
  CHECK(median(el) < 0.1);
  CHECK(median(eg) < 0.1);
}

TEST_CASE("Planck occupation") {
  CHECK(planck_occupation(79.0, 5.8) == doctest::Approx(0.530392634488552).epsilon(1e-12));
  CHECK(planck_occupation(900.0, 5.8) == doctest::Approx(3.25900120024522).epsilon(1e-12));
  CHECK(planck_occupation(150.0, 5.8) == doctest::Approx(0.685314876882857).epsilon(1e-12));
  CHECK(planck_occupation(20.0, 5.8) == doctest::Approx(0.500000902764595).epsilon(1e-12));
  CHECK(planck_occupation(1.0, 5.8) == 0.5);
  CHECK_THROWS_AS(planck_occupation(0.0, 5.8), DomainError);
  CHECK_THROWS_AS(planck_occupation(10.0, -1.0), DomainError);
  double prev = 0.0;
  for (double t = 10.0; t < 2000.0; t *= 1.3) {
    const double s = planck_occupation(t, 5.8);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("thermal sweep: exact line and rescale invariance") {
  const auto fits = fit_thermal_sweep(noiseless_sweep(20.0, 100.0, 0.5));
  REQUIRE(fits.size() == 1);
  CHECK(fits[0].chain_gain == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(fits[0].n_add == doctest::Approx(0.5).epsilon(1e-12));
  for (const auto& r : fits[0].residuals) CHECK(std::abs(r.observed - r.model) < 1e-12 * r.observed);

  testgen::for_cases(10, 61, [](testgen::Gen& gen, int) {
    auto pts = sim::simulate_thermal_sweep(config::even_grid(79.0, 900.0, 8), std::vector<double>{20.0, 30.0},
                                           sim::ChainConfig{}, 0.02, gen.engine()());
    const auto a = fit_thermal_sweep(pts);
    const double c = gen.uniform(1e-3, 1e3);
    for (auto& p : pts) p.s_out *= c;
    const auto b = fit_thermal_sweep(pts);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b[i].n_add == doctest::Approx(a[i].n_add).epsilon(1e-10));
      CHECK(b[i].chain_gain == doctest::Approx(c * a[i].chain_gain).epsilon(1e-10));
    }
  });
}

TEST_CASE("thermal sweep errors") {
  auto pts = noiseless_sweep(20.0, 100.0, 0.5);
  CHECK_THROWS_AS(fit_thermal_sweep(std::vector<ThermalSweepPoint>{}), FitError);
  CHECK_THROWS_AS(fit_thermal_sweep(std::span(pts).first(2)), FitError);
  for (auto& p : pts) p.s_in = 1.0;
  CHECK_THROWS_AS(fit_thermal_sweep(pts), FitError);
}

TEST_CASE("thermal sweep round trip at 2% scatter") {
  const std::vector<double> gains{20.0, 25.0, 30.0};
  const sim::ChainConfig chain;
  std::vector<std::vector<double>> err(3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fits = fit_thermal_sweep(
        sim::simulate_thermal_sweep(std::vector<double>{79, 150, 250, 400, 600, 900}, gains, chain, 0.02, seed));
    for (std::size_t i = 0; i < 3; ++i) {
      const double truth = chain.n_jpa + chain.n_hemt / db_to_linear(gains[i]);
      err[i].push_back(std::abs(fits[i].n_add / truth - 1.0));
    }
  }
  for (const auto& e : err) CHECK(median(e) < 0.1);
}

TEST_CASE("added-noise model: exact recovery and asymptote") {
  std::vector<GainNoiseFit> per_gain;
  for (double g : {20.0, 25.0, 30.0}) per_gain.push_back({g, 1.0, 0.0, 0.39 + 18.0 / db_to_linear(g), 0.0, {}});
  const auto m = fit_added_noise_model(per_gain);
  CHECK(m.n_jpa == doctest::Approx(0.39).epsilon(1e-12));
  CHECK(m.n_hemt == doctest::Approx(18.0).epsilon(1e-10));
  CHECK(m.n_add(29.0) == doctest::Approx(0.412660657412295).epsilon(1e-12));
  CHECK(m.n_add(400.0) == doctest::Approx(m.n_jpa).epsilon(1e-12));
  CHECK(m.at_or_above_quantum_limit());
  CHECK_THROWS_AS(fit_added_noise_model(std::span(per_gain).first(1)), FitError);
  std::vector<GainNoiseFit> same(3, per_gain[0]);
  CHECK_THROWS_AS(fit_added_noise_model(same), FitError);
}

TEST_CASE("efficiency examples and curve") {
  CHECK(efficiency_from_added_noise(0.0) == 1.0);
  CHECK(efficiency_from_added_noise(0.5) == 0.5);
  CHECK(efficiency_from_added_noise(0.412660657412295) == doctest::Approx(0.547848749630198).epsilon(1e-12));
  CHECK_THROWS_AS(efficiency_from_added_noise(-0.1), DomainError);

  AddedNoiseModel model;
  model.n_jpa = 0.39;
  model.n_hemt = 18.0;
  model.covariance = {{{0.03 * 0.03, 0.0}, {0.0, 25.0}}};
  const auto curve = efficiency_curve(model, 17.0, 33.0);
  const auto p = curve.at(29.0);
  CHECK(p.eta == doctest::Approx(0.547848749630198).epsilon(1e-12));
  CHECK(p.eta_err > 0.0);
  CHECK_THROWS_AS(curve.at(35.0), DomainError);
  CHECK_THROWS_AS(curve.sample(0.0), DomainError);
  const auto pts = curve.sample(2.0);
  CHECK(pts.size() == 9);
  CHECK(pts.front().gain_db == 17.0);
  CHECK(pts.back().gain_db == doctest::Approx(33.0));
}

TEST_CASE("monotonicity in gain") {
  testgen::for_cases(30, 71, [](testgen::Gen& gen, int) {
    const double l = gen.uniform(1e-6, 1e-3);
    AddedNoiseModel model;
    model.n_jpa = gen.uniform(0.0, 1.0);
    model.n_hemt = gen.uniform(0.0, 50.0);
    const auto curve = efficiency_curve(model, 0.0, 40.0);
    double g_prev = 0.0;
    for (double g = 0.5; g <= 40.0; g += 0.5) {
      CHECK(nbar_from_gain(l, g).nbar >= nbar_from_gain(l, g_prev).nbar);
      CHECK(dephasing_rate_khz(l, 40.0, 410.0, g) > dephasing_rate_khz(l, 40.0, 410.0, g_prev));
      const double eta = curve.at(g).eta;
      CHECK(eta >= curve.at(g_prev).eta);
      CHECK(eta > 0.0);
      CHECK(eta <= 1.0);
      g_prev = g;
    }
  });
}

TEST_CASE("comparison: identity, ideal fidelity and bands") {
  AddedNoiseModel model;
  model.n_jpa = 0.39;
  model.n_hemt = 18.0;
  model.covariance = {{{9e-4, 0.0}, {0.0, 25.0}}};
  const auto curve = efficiency_curve(model, 17.0, 33.0);
  const auto expected = fock::expected_measured_state(410.0, 300.0, curve.at(29.0).eta, 3);
  const auto report = compare_to_expectation(result_from(expected, expected), 410.0, 300.0, curve, 29.0);
  CHECK(report.fidelity_expected.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.fidelity_expected.sys_lo <= 1.0);
  CHECK(report.fidelity_expected.sys_hi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.escape_ratio == doctest::Approx(300.0 / 410.0));
  CHECK(report.rho_expected[1] == doctest::Approx(0.731707317073171 * 0.547848749630198).epsilon(1e-12));

  testgen::for_cases(20, 81, [&](testgen::Gen& gen, int) {
    const auto rho = gen.density(3);
    const auto alt = gen.density(3);
    const auto r = compare_to_expectation(result_from(rho, alt), 410.0, 300.0, curve, gen.uniform(17.0, 33.0));
    CHECK(r.fidelity_ideal.value == doctest::Approx(std::sqrt(rho[1])).epsilon(1e-14));
    CHECK(r.fidelity_expected.sys_lo <= r.fidelity_expected.value);
    CHECK(r.fidelity_expected.value <= r.fidelity_expected.sys_hi);
  });
}

TEST_CASE("error bars cover the generating truth in at least 95% of 1000 seeds") {
  constexpr int kSeeds = 1000;
  // Two-sigma bands.
  int cover_l = 0, cover_g = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto m = fit_dephasing(sim::simulate_dephasing_data(dephasing_gains(), 2.1e-4, 40.0, 410.0, 0.05, seed), 410.0);
    cover_l += std::abs(m.isolation_l - 2.1e-4) < 2.0 * m.isolation_err();
    cover_g += std::abs(m.gamma0_khz - 40.0) < 2.0 * m.gamma0_err();
  }
  CHECK(cover_l >= 950);
  CHECK(cover_g >= 950);

  const config::CharacterizationOptions defaults;
  const sim::ChainConfig chain;
  int cover_jpa = 0, cover_hemt = 0, cover_eta = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto pts = sim::simulate_thermal_sweep(defaults.sweep_temperatures_mk, defaults.sweep_gains_db, chain,
                                                 defaults.sweep_scatter, seed);
    const auto m = fit_added_noise_model(fit_thermal_sweep(pts));
    cover_jpa += std::abs(m.n_jpa - chain.n_jpa) < 2.0 * std::sqrt(m.covariance[0][0]);
    cover_hemt += std::abs(m.n_hemt - chain.n_hemt) < 2.0 * std::sqrt(m.covariance[1][1]);
    const auto p = efficiency_curve(m, 17.0, 33.0).at(29.0);
    cover_eta += std::abs(p.eta - chain.efficiency()) < 2.0 * p.eta_err;
  }
  CHECK(cover_jpa >= 950);
  CHECK(cover_hemt >= 950);
  CHECK(cover_eta >= 950);
}
