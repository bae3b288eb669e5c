#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "photonchain/errors.hpp"
#include "photonchain/fock.hpp"
#include "support/generators.hpp"

using namespace photonchain;
using namespace photonchain::fock;

namespace {

// Composite Simpson over [-a, a]; independent of any library quadrature.
template <typename F>
double simpson(F&& f, double a = 12.0, int n = 24000) {
  const double h = 2.0 * a / n;
  double s = f(-a) + f(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(-a + i * h);
  return s * h / 3.0;
}

double diag_sqrt_fidelity(const DiagonalDensityMatrix& a, const DiagonalDensityMatrix& b) {
  const int n = std::max(a.n_max(), b.n_max()) + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n), B = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = a[i];
    B(i, i) = b[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(A);
  const Eigen::MatrixXd sa = ea.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(sa * B * sa);
  return em.operatorSqrt().trace();
}

}  // namespace

TEST_CASE("marginal pdf values against closed-form Hermite oracle") {
  // Closed-form Hermite values at 30 digits.
  struct Case {
    int n;
    double x;
    double expected;
  };
  const Case cases[] = {{0, 0.0, 0.79788456080286535588},  {1, 0.5, 0.4839414490382866996},
                        {2, -0.3, 0.13648879734448114395}, {3, 0.7, 0.10580421486332618364},
                        {5, 1.1, 0.28469844303167989559},  {10, 1.3, 0.024526350553812601798},
                        {15, -2.0, 0.070541448187686130963}, {20, 0.5, 0.0052161207692240453506},
                        {20, 3.0, 0.18549651625284882264}};
  for (const auto& c : cases) {
    CAPTURE(c.n);
    CAPTURE(c.x);
    CHECK(fock_marginal_pdf(c.n, c.x) == doctest::Approx(c.expected).epsilon(1e-12));
  }
  CHECK(fock_marginal_pdf(1, 0.0) == 0.0);
  CHECK(fock_marginal_pdf(0, 0.0) == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("marginal pdf domain") {
  CHECK_THROWS_AS(fock_marginal_pdf(-1, 0.0), DomainError);
  CHECK_THROWS_AS(fock_marginal_pdf(21, 0.0), DomainError);
  CHECK_NOTHROW(fock_marginal_pdf(20, 0.0));
}

TEST_CASE("vacuum marginal has variance 1/4 and every marginal integrates to one") {
  const double var0 = simpson([](double x) { return x * x * fock_marginal_pdf(0, x); });
  CHECK(var0 == doctest::Approx(kVacuumVariance).epsilon(1e-12));
  for (int n = 0; n <= 10; ++n) {
    CAPTURE(n);
    CHECK(std::abs(simpson([n](double x) { return fock_marginal_pdf(n, x); }) - 1.0) < 1e-8);
    // <x^2> = (2n + 1) / 4 for the phase-averaged Fock marginal.
    CHECK(simpson([n](double x) { return x * x * fock_marginal_pdf(n, x); }) ==
          doctest::Approx((2.0 * n + 1.0) / 4.0).epsilon(1e-10));
  }
}

TEST_CASE("batched marginals match the single evaluation") {
  std::vector<double> out(kMaxMarginalPhotonNumber + 1);
  for (double x : {-4.0, -1.3, 0.0, 0.2, 2.7}) {
    fock_marginal_pdfs(x, out);
    for (int n = 0; n <= kMaxMarginalPhotonNumber; ++n) CHECK(out[n] == doctest::Approx(fock_marginal_pdf(n, x)));
  }
}

TEST_CASE("mixture pdf examples") {
  CHECK(mixture_pdf(DiagonalDensityMatrix({0.639, 0.361}), 0.0) == doctest::Approx(0.509848234353031).epsilon(1e-12));
  testgen::for_cases(20, 11, [](testgen::Gen& g, int) {
    const auto rho = g.density(g.integer(0, 10));
    CHECK(std::abs(simpson([&](double x) { return mixture_pdf(rho, x); }) - 1.0) < 1e-8);
  });
}

TEST_CASE("density matrix construction invariants") {
  CHECK_THROWS_AS(DiagonalDensityMatrix({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(DiagonalDensityMatrix({1.1, -0.1}), DomainError);
  CHECK_THROWS_AS(DiagonalDensityMatrix(std::vector<double>{}), DomainError);
  CHECK_NOTHROW(DiagonalDensityMatrix({0.5, 0.5 + 5e-10}));
  const auto n = DiagonalDensityMatrix::normalized({2.0, 1.0, 1.0});
  CHECK(n[0] == doctest::Approx(0.5));
  CHECK(n[7] == 0.0);
  CHECK_THROWS_AS(ThermalOccupation(-0.1), DomainError);
  CHECK(DiagonalDensityMatrix::fock(2, 3).mean_photon_number() == 2.0);
}

TEST_CASE("loss channel examples") {
  const auto out = loss_channel(DiagonalDensityMatrix::fock(1, 1), 300.0 / 410.0);
  CHECK(out[0] == doctest::Approx(0.2682926829268293).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.7317073170731707).epsilon(1e-12));
  const auto two = loss_channel(DiagonalDensityMatrix::fock(2, 2), 0.5);
  CHECK(two[0] == doctest::Approx(0.25));
  CHECK(two[1] == doctest::Approx(0.5));
  CHECK(two[2] == doctest::Approx(0.25));
  CHECK_THROWS_AS(loss_channel(two, 1.5), DomainError);
  CHECK_THROWS_AS(loss_channel(two, -0.1), DomainError);
}

TEST_CASE("loss channel properties") {
  testgen::for_cases(200, 21, [](testgen::Gen& g, int) {
    const auto rho = g.density(g.integer(0, 12), 0.2);
    const double t1 = g.uniform();
    const double t2 = g.uniform();
    const auto identity = loss_channel(rho, 1.0);
    const auto composed = loss_channel(loss_channel(rho, t1), t2);
    const auto direct = loss_channel(rho, t1 * t2);
    double sum = 0.0;
    for (int n = 0; n <= rho.n_max(); ++n) {
      CHECK(identity[n] == doctest::Approx(rho[n]).epsilon(1e-14));
      CHECK(std::abs(composed[n] - direct[n]) < 1e-12);
      sum += composed[n];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    // Mean photon number scales with transmissivity.
    CHECK(loss_channel(rho, t1).mean_photon_number() == doctest::Approx(t1 * rho.mean_photon_number()).epsilon(1e-12));
  });
}

TEST_CASE("thermal state") {
  const auto vac = thermal_state(ThermalOccupation(0.0), 3);
  CHECK(vac[0] == 1.0);
  const auto th = thermal_state(ThermalOccupation(0.041));
  CHECK(th[1] / th[0] == doctest::Approx(0.0393852065321806).epsilon(1e-12));
  testgen::for_cases(30, 31, [](testgen::Gen& g, int) {
    const double nbar = g.uniform(0.0, 3.0);
    const auto t = thermal_state(ThermalOccupation(nbar));
    CHECK(t.mean_photon_number() == doctest::Approx(nbar).epsilon(1e-7));
  });
}

TEST_CASE("fidelity examples and properties") {
  CHECK(fidelity_diagonal(DiagonalDensityMatrix({0.612, 0.361, 0.027}), DiagonalDensityMatrix::fock(1, 3)) ==
        doctest::Approx(0.600832755431992).epsilon(1e-12));
  CHECK(fidelity_diagonal(DiagonalDensityMatrix({1.0, 0.0}), DiagonalDensityMatrix({0.0, 1.0})) == 0.0);
  testgen::for_cases(100, 41, [](testgen::Gen& g, int) {
    const auto a = g.density(g.integer(0, 6), 0.2);
    const auto b = g.density(g.integer(0, 6), 0.2);
    const double fab = fidelity_diagonal(a, b);
    CHECK(fab == doctest::Approx(fidelity_diagonal(b, a)).epsilon(1e-15));
    CHECK(fab >= 0.0);
    CHECK(fab <= 1.0 + 1e-15);
    CHECK(fidelity_diagonal(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fab == doctest::Approx(diag_sqrt_fidelity(a, b)).epsilon(1e-9));
  });
}

TEST_CASE("g2 examples and properties") {
  CHECK(g2_zero(DiagonalDensityMatrix({0.612, 0.361, 0.027, 0.0})) ==
        doctest::Approx(0.313543329946291).epsilon(1e-12));
  CHECK(g2_zero(DiagonalDensityMatrix({0.748, 0.247, 0.005})) == doctest::Approx(0.151402746445821).epsilon(1e-12));
  CHECK(g2_two_photon_shorthand(DiagonalDensityMatrix({0.612, 0.361, 0.027})) ==
        doctest::Approx(2.0 * 0.027 / 0.361));
  CHECK_THROWS_AS(g2_zero(DiagonalDensityMatrix::vacuum(3)), UndefinedValueError);

  // Truncated Poisson populations: g2 -> 1.
  const double alpha2 = 0.7;
  std::vector<double> poisson;
  double term = std::exp(-alpha2);
  for (int n = 0; n <= 20; ++n) {
    poisson.push_back(term);
    term *= alpha2 / (n + 1);
  }
  CHECK(g2_zero(DiagonalDensityMatrix::normalized(poisson)) == doctest::Approx(1.0).epsilon(1e-9));

  testgen::for_cases(50, 51, [](testgen::Gen& g, int) {
    const auto rho = g.density(g.integer(1, 6));
    if (rho.mean_photon_number() <= 0.0) return;
    CHECK(g2_zero(rho) >= 0.0);
    CHECK(g2_zero(rho.resized(rho.n_max() + g.integer(1, 5))) == doctest::Approx(g2_zero(rho)).epsilon(1e-14));
  });
}

TEST_CASE("expected measured state") {
  const auto half = expected_measured_state(410.0, 300.0, 0.5);
  CHECK(half[1] == doctest::Approx(0.365853658536585).epsilon(1e-12));
  CHECK(expected_measured_state(410.0, 410.0, 1.0)[1] == 1.0);
  CHECK(expected_measured_state(410.0, 300.0, 0.0)[0] == 1.0);
  CHECK_THROWS_AS(expected_measured_state(300.0, 410.0, 0.5), DomainError);
  CHECK_THROWS_AS(expected_measured_state(410.0, 300.0, 1.5), DomainError);
}

TEST_CASE("photon-number addition is a convolution") {
  const auto a = DiagonalDensityMatrix({0.5, 0.5});
  const auto s = add_photon_numbers(a, a, 4);
  CHECK(s[0] == doctest::Approx(0.25));
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(s[2] == doctest::Approx(0.25));
}

TEST_CASE("flat record round trip") {
  auto rho = DiagonalDensityMatrix({0.6, 0.3, 0.1});
  auto rec = to_record(rho);
  auto back = from_record(rec);
  CHECK(back.n_max() == 2);
  for (int n = 0; n <= 2; ++n) CHECK(back[n] == rho[n]);
  CHECK(!back.uncertainty());

  rho.set_uncertainty({{0.01, 0.02, 0.03}, {0.5, 0.25, 0.05}, {0.65, 0.35, 0.12}});
  back = from_record(to_record(rho));
  REQUIRE(back.uncertainty());
  CHECK(back.uncertainty()->stat[2] == 0.03);
  CHECK(back.uncertainty()->sys_hi[0] == 0.65);
  CHECK_THROWS_AS(from_record({{"p0", 1.0}}), DomainError);
}
