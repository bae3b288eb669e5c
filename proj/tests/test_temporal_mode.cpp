#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "photonchain/errors.hpp"
#include "photonchain/temporal_mode.hpp"
#include "support/generators.hpp"

using namespace photonchain;
using namespace photonchain::temporal;

namespace {

const std::vector<TimeInterval> kReadouts{{-6.0, -2.0}, {10.0, 14.0}};

double norm2(std::span<const double> v, double dt) { return inner_product(v, v, dt); }

// Independent least-squares oracle: solve the 2x2 normal equations directly.
double normal_equation_vq(std::span<const double> trace, const TemporalMode& f, const WindowFunction& b) {
  const auto n = static_cast<Eigen::Index>(trace.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = f.samples()[i];
    x(i, 1) = b.samples()[i];
    y(i) = trace[i];
  }
  const Eigen::Matrix2d a = x.transpose() * x;
  const Eigen::Vector2d rhs = x.transpose() * y;
  return a.fullPivLu().solve(rhs)(0);
}

}  // namespace

TEST_CASE("grid and params validation") {
  CHECK_THROWS_AS(TraceGrid(0.0, 10, 0.0), DomainError);
  CHECK_THROWS_AS(TraceGrid(0.01, 0, 0.0), DomainError);
  const TraceGrid g;
  CHECK(g.duration() == doctest::Approx(56.0));
  CHECK(g.time(2000) == doctest::Approx(0.0));
  CHECK_THROWS_AS((TemporalModeParams{-1.0, 410.0, 1.0}.validate()), DomainError);
  CHECK_THROWS_AS((TemporalModeParams{150.0, 0.0, 1.0}.validate()), DomainError);
  CHECK_THROWS_AS((TemporalModeParams{150.0, 410.0, 0.0}.validate()), DomainError);
  CHECK(jpa_bandwidth_from_gain(43.0, 29.0) == doctest::Approx(43.0 / std::sqrt(794.328234724282)));
}

TEST_CASE("mode shape: ideal amplifier and zero rise gives a decaying exponential") {
  const TraceGrid g;
  const double kappa = 2.0 * std::numbers::pi * 410e-3;
  const auto f = mode_shape({0.0, 410.0, std::numeric_limits<double>::infinity()}, g);
  std::vector<double> ref(g.n_samples, 0.0);
  for (std::size_t i = 0; i < g.n_samples; ++i) {
    const double t = g.time(i);
    if (t >= 0.0 && t < 8.0) ref[i] = std::exp(-0.5 * kappa * t);
  }
  const double nr = std::sqrt(norm2(ref, g.dt_us));
  for (std::size_t i = 0; i < g.n_samples; i += 37) CHECK(f.samples()[i] == doctest::Approx(ref[i] / nr).epsilon(1e-12));
}

TEST_CASE("mode shape: norm, support and peak position") {
  const TraceGrid g;
  testgen::for_cases(20, 3, [&](testgen::Gen& gen, int) {
    const TemporalModeParams p{gen.uniform(0.0, 400.0), gen.uniform(100.0, 2000.0), gen.uniform(0.3, 30.0)};
    const auto f = mode_shape(p, g);
    CHECK(norm2(f.samples(), g.dt_us) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < g.n_samples; ++i) {
      const double t = g.time(i);
      if (t < -1.0 || t >= 8.0) REQUIRE(f.samples()[i] == 0.0);
    }
  });
  const auto f = mode_shape({150.0, 410.0, jpa_bandwidth_from_gain(43.0, 29.0)}, g);
  const auto peak = std::max_element(f.samples().begin(), f.samples().end()) - f.samples().begin();
  CHECK(std::abs(g.time(static_cast<std::size_t>(peak))) < 0.2);
}

TEST_CASE("mode shape: resolution errors") {
  CHECK_THROWS_AS(mode_shape({150.0, 410.0, 1.5}, TraceGrid(0.5, 200, 20.0)), ResolutionError);
  CHECK_THROWS_AS(mode_shape({150.0, 410.0, 1.5}, TraceGrid(0.01, 5600, 20.0), ModeSupport{0.0, 0.005}),
                  ResolutionError);
}

TEST_CASE("mode shape is continuous in each parameter") {
  const TraceGrid g;
  const TemporalModeParams p{150.0, 410.0, 1.526};
  const auto f0 = mode_shape(p, g);
  for (int k = 0; k < 3; ++k) {
    auto q = p;
    double* field = k == 0 ? &q.rise_time_ns : k == 1 ? &q.decay_rate_khz : &q.jpa_bandwidth_mhz;
    *field *= 1.0 + 1e-6;
    const auto f1 = mode_shape(q, g);
    std::vector<double> d(g.n_samples);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f1.samples()[i] - f0.samples()[i];
    CHECK(std::sqrt(norm2(d, g.dt_us)) < 1e-4);
  }
}

TEST_CASE("background window") {
  const TraceGrid g;
  const auto none = background_window(g, {});
  for (double v : none.samples()) REQUIRE(v == doctest::Approx(1.0 / std::sqrt(g.duration())));
  const auto w = background_window(g, kReadouts);
  CHECK(norm2(w.samples(), g.dt_us) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < g.n_samples; ++i) {
    const double t = g.time(i);
    const bool in = (t >= -6.0 && t < -2.0) || (t >= 10.0 && t < 14.0);
    if (in) REQUIRE(w.samples()[i] == 0.0);
    else REQUIRE(w.samples()[i] == doctest::Approx(w.samples()[0]));
  }
  const std::vector<TimeInterval> all{{-100.0, 100.0}};
  CHECK_THROWS_AS(background_window(g, all), DomainError);
}

TEST_CASE("extraction examples") {
  const TraceGrid g(0.01, 2000, 5.0);
  // Orthogonal pair: mode of zero mean on a constant window.
  std::vector<double> fs(g.n_samples, 0.0);
  for (std::size_t i = 0; i < g.n_samples; ++i) fs[i] = std::sin(2.0 * std::numbers::pi * g.time(i) / g.duration());
  const double nf = std::sqrt(norm2(fs, g.dt_us));
  for (auto& v : fs) v /= nf;
  const TemporalMode f(g, fs);
  const auto b = background_window(g, {});
  const QuadratureExtractor ex(f, b);
  CHECK(std::abs(ex.overlap()) < 1e-12);
  std::vector<double> trace(g.n_samples);
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i] = 2.5 * fs[i];
  CHECK(ex(trace) == doctest::Approx(2.5).epsilon(1e-12));
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i] = -3.0 * b.samples()[i];
  CHECK(std::abs(ex(trace)) < 1e-12);
}

TEST_CASE("extraction matches the normal-equation oracle, is linear and rejects the window") {
  const TraceGrid g;
  const auto f = mode_shape({150.0, 410.0, 1.526}, g);
  const auto b = background_window(g, kReadouts);
  const QuadratureExtractor ex(f, b);
  testgen::for_cases(10, 5, [&](testgen::Gen& gen, int) {
    const auto v1 = gen.vector(g.n_samples, 0.3);
    const auto v2 = gen.vector(g.n_samples, 0.3);
    CHECK(ex(v1) == doctest::Approx(normal_equation_vq(v1, f, b)).epsilon(1e-10));
    const double a = gen.uniform(-3, 3), c = gen.uniform(-3, 3);
    std::vector<double> mix(g.n_samples), shifted(g.n_samples);
    const double amp = gen.uniform(-50, 50);
    for (std::size_t i = 0; i < mix.size(); ++i) {
      mix[i] = a * v1[i] + c * v2[i];
      shifted[i] = v1[i] + amp * b.samples()[i];
    }
    CHECK(std::abs(ex(mix) - (a * ex(v1) + c * ex(v2))) < 1e-12 * (1.0 + std::abs(ex(mix))));
    CHECK(std::abs(ex(shifted) - ex(v1)) < 1e-10 * std::abs(amp));
  });
}

TEST_CASE("white-noise extraction variance") {
  const TraceGrid g;
  const auto f = mode_shape({150.0, 410.0, 1.526}, g);
  const auto b = background_window(g, kReadouts);
  const QuadratureExtractor ex(f, b);
  const double sigma = 0.7;
  const int trials = 10000;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, sigma);
  std::vector<double> trace(g.n_samples), vq(trials);
  for (int k = 0; k < trials; ++k) {
    for (auto& v : trace) v = nd(rng);
    vq[k] = ex(trace);
  }
  double m2 = 0.0, m4 = 0.0;
  for (double v : vq) {
    m2 += v * v;
    m4 += v * v * v * v;
  }
  m2 /= trials;
  m4 /= trials;
  const double expected = sigma * sigma * g.dt_us / (1.0 - ex.overlap() * ex.overlap());
  const double se = std::sqrt((m4 - m2 * m2) / trials);
  CHECK(std::abs(m2 - expected) < 3.0 * se);
}

TEST_CASE("exact extraction against the first-order form") {
  // A long background window keeps the overlap small.
  const TraceGrid g(0.05, 48000, 20.0);
  const auto f = mode_shape({150.0, 410.0, 1.526}, g);
  const auto b = background_window(g, kReadouts);
  const QuadratureExtractor ex(f, b);
  REQUIRE(ex.overlap() * ex.overlap() < 1e-3);
  testgen::Gen gen(17);
  const auto v = gen.vector(g.n_samples);
  std::vector<double> trace(g.n_samples);
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i] = v[i] + 3.0 * f.samples()[i];
  CHECK(std::abs(ex.first_order(trace) / ex(trace) - 1.0) < 1e-3);
}

TEST_CASE("extraction errors") {
  const TraceGrid g;
  const auto f = mode_shape({150.0, 410.0, 1.526}, g);
  const auto b = background_window(g, kReadouts);
  CHECK_THROWS_AS(QuadratureExtractor(f, background_window(TraceGrid(0.02, 2800, 20.0), kReadouts)), DomainError);
  const TemporalMode same(g, std::vector<double>(b.samples().begin(), b.samples().end()));
  CHECK_THROWS_AS(QuadratureExtractor(same, b), SingularityError);
  const QuadratureExtractor ex(f, b);
  CHECK_THROWS_AS(ex(std::vector<double>(10, 0.0)), DataError);
  const VoltageTrace tr{std::vector<double>(g.n_samples, 1.0)};
  CHECK(extract_quadrature(tr, f, b) == doctest::Approx(ex(tr.samples)));
}

TEST_CASE("trace matrix") {
  TraceMatrix m(TraceGrid(0.1, 4, 0.0));
  m.append(std::vector<double>{1, 2, 3, 4});
  m.append(std::vector<double>{5, 6, 7, 8});
  CHECK(m.rows() == 2);
  CHECK(m.row(1)[2] == 7.0);
  CHECK_THROWS_AS(m.append(std::vector<double>{1.0}), DataError);
}
