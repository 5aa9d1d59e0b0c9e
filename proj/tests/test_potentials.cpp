#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "ewf/potentials.hpp"
#include "support.hpp"

using namespace ewf;

namespace {

constexpr double hbar = constants::hbar;

bool hermitian(const SpinMatrix& u) { return (u - u.adjoint()).norm() <= 1e-14 * (1.0 + u.norm()); }

}  // namespace

TEST_CASE("zero field gives a zero potential") {
  const ZeemanGradientPotential u({0.0, 0.0, 1}, constants::gamma_electron);
  CHECK(u.evaluate(1e-4, 0.0).norm() == 0.0);
  CHECK(u.force(-3e-5, 0.0).norm() == 0.0);
}

TEST_CASE("Zeeman levels are -+ gamma hbar B / 2 with constant forces") {
  const double gamma = constants::gamma_electron;
  const UniaxialGradientField f{0.3, 1e3, 1};
  const auto u = zeeman_gradient_potential(f, support::silver_beam());
  for (double x : {-2e-4, 0.0, 7e-5}) {
    const double b = 0.3 + 1e3 * x;
    const auto m = u.evaluate(x, 0.0);
    CHECK(m(0, 0).real() == doctest::Approx(-0.5 * gamma * hbar * b));
    CHECK(m(1, 1).real() == doctest::Approx(0.5 * gamma * hbar * b));
    CHECK(m(0, 1) == Complex{});
    CHECK(m(1, 0) == Complex{});
    const auto force = u.force(x, 0.0);
    CHECK(force(0, 0).real() == doctest::Approx(0.5 * gamma * hbar * 1e3));
    CHECK(force(1, 1).real() == doctest::Approx(-0.5 * gamma * hbar * 1e3));
    CHECK(u.derivative(x, 0.0, 2).norm() == 0.0);
    CHECK(u.derivative(x, 0.0, 5).norm() == 0.0);

    const Eigen::SelfAdjointEigenSolver<SpinMatrix> eig(m);
    CHECK(eig.eigenvalues()(0) == doctest::Approx(-0.5 * std::abs(gamma) * hbar * std::abs(b)));
    CHECK(eig.eigenvalues()(1) == doctest::Approx(0.5 * std::abs(gamma) * hbar * std::abs(b)));
  }
  CHECK(u.commuting());
  CHECK(u.diagonal());
  CHECK(u.polynomial_degree() == 1u);
}

TEST_CASE("silver force at 10 G/um is about mu_B G") {
  const auto u = zeeman_gradient_potential({0.0, 1e3, 1}, support::silver_beam());
  // |gamma_e| hbar / 2 = g_e mu_B / 2 differs from mu_B by the electron g-factor anomaly.
  CHECK(std::abs(u.force(0.0, 0.0)(0, 0).real()) == doctest::Approx(9.27e-21).epsilon(2e-3));
  CHECK(std::abs(u.force(0.0, 0.0)(0, 0).real()) ==
        doctest::Approx(constants::bohr_magneton * 1e3 * 1.00115965).epsilon(1e-6));
}

TEST_CASE("polarity reverses the gradient") {
  const UniaxialGradientField f{0.0, 420.0, -1};
  CHECK(f.effective_gradient() == -420.0);
  CHECK(f.field(1e-3) == doctest::Approx(-0.42));
}

TEST_CASE("rf region couples the levels with -gamma hbar B1 / 2") {
  const double gamma = constants::gamma_fluorine19;
  BeamSpec naf = support::silver_beam();
  naf.gyromagnetic_ratio = gamma;

  const auto off = rf_region_potential(0.0, naf);
  CHECK(off.evaluate(0.0, 0.0).norm() == 0.0);
  CHECK(off.diagonal());

  const auto rf = rf_region_potential(2e-3, naf);
  const auto m = rf.evaluate(1e-5, 0.0);
  CHECK(m(0, 1).real() == doctest::Approx(-gamma * hbar * 1e-3));
  CHECK(m(1, 0).real() == doctest::Approx(-gamma * hbar * 1e-3));
  CHECK(m(0, 0) == Complex{});
  CHECK(m(1, 1) == Complex{});
  const Eigen::SelfAdjointEigenSolver<SpinMatrix> eig(m);
  CHECK(eig.eigenvalues()(1) == doctest::Approx(0.5 * gamma * hbar * 2e-3));
  CHECK(eig.eigenvalues()(0) == doctest::Approx(-0.5 * gamma * hbar * 2e-3));
  CHECK(rf.rabi_frequency() == doctest::Approx(gamma * 2e-3));
  CHECK(rf.commuting());
  CHECK_FALSE(rf.diagonal());
  CHECK(rf.derivative(0.0, 0.0, 1).norm() == 0.0);
  CHECK((rf.evaluate(-1e-3, 0.0) * rf.evaluate(2e-3, 0.0) -
         rf.evaluate(2e-3, 0.0) * rf.evaluate(-1e-3, 0.0)).norm() == 0.0);
}

TEST_CASE("resonance offset enters as -hbar Delta / 2 on the diagonal") {
  const double gamma = constants::gamma_fluorine19;
  BeamSpec naf = support::silver_beam();
  naf.gyromagnetic_ratio = gamma;
  const double omega = 2.0 * constants::pi * 7.9e6;
  const double b0 = 0.2;
  const auto rf = rf_region_potential(2e-3, naf, b0, omega);
  const double delta = gamma * b0 - omega;
  CHECK(rf.detuning() == doctest::Approx(delta));
  const auto m = rf.evaluate(0.0, 0.0);
  CHECK(m(0, 0).real() == doctest::Approx(-0.5 * hbar * delta));
  CHECK(m(1, 1).real() == doctest::Approx(0.5 * hbar * delta));

  const auto resonant = rf_region_potential(2e-3, naf, omega / gamma, omega);
  CHECK(std::abs(resonant.detuning()) < 1e-6 * omega);
}

TEST_CASE("every model is Hermitian and its derivative matches finite differences") {
  std::vector<std::unique_ptr<PotentialModel>> models;
  models.push_back(std::make_unique<ZeemanGradientPotential>(UniaxialGradientField{0.2, 850.0, 1},
                                                             constants::gamma_electron));
  models.push_back(std::make_unique<RfRegionPotential>(2e-3, constants::gamma_fluorine19, 3e4));
  Eigen::VectorXd amps(2);
  amps << 3e-28, -1e-28;
  models.push_back(std::make_unique<PeriodicDiagonalPotential>(amps, 40e-6, 0.3));
  models.push_back(std::make_unique<FreeSpacePotential>());

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ux(-2e-4, 2e-4), ut(0.0, 1e-3);
  for (const auto& m : models) {
    for (int k = 0; k < 100; ++k) {
      const double x = ux(rng), t = ut(rng);
      const auto u = m->evaluate(x, t);
      CHECK(hermitian(u));
      if (m->diagonal()) CHECK(u(0, 1) == Complex{});
      const double h = 1e-9;
      const SpinMatrix fd = (m->evaluate(x + h, t) - m->evaluate(x - h, t)) / (2.0 * h);
      const SpinMatrix d1 = m->derivative(x, t, 1);
      CHECK((fd - d1).norm() <= 1e-6 * d1.norm() + 1e-30);
      CHECK((d1 + m->force(x, t)).norm() <= 1e-12 * d1.norm());
    }
  }
}

TEST_CASE("periodic model derivatives follow the cosine derivative cycle") {
  Eigen::VectorXd amps(2);
  amps << 2.0, -1.0;
  const PeriodicDiagonalPotential u(amps, 1.0, 0.0);
  const double k = 2.0 * constants::pi;
  CHECK(u.derivative(0.0, 0.0, 2)(0, 0).real() == doctest::Approx(-2.0 * k * k));
  CHECK(u.derivative(0.25, 0.0, 1)(1, 1).real() == doctest::Approx(k));
  CHECK(u.length_scale() == 1.0);
  CHECK_FALSE(u.polynomial_degree().has_value());
}

TEST_CASE("truncation validity is (l_c / L)^n / n!") {
  auto beam = support::silver_beam();
  const auto zeeman = zeeman_gradient_potential({0.0, 1e3, 1}, beam);
  CHECK(truncation_validity(beam, zeeman, 2) == 0.0);

  Eigen::VectorXd amps(2);
  amps << 1.0, -1.0;
  beam.coherence_length = 1e-3;
  CHECK(truncation_validity(beam, PeriodicDiagonalPotential(amps, 1e-3), 1) == doctest::Approx(1.0));
  CHECK(truncation_validity(beam, PeriodicDiagonalPotential(amps, 1e-3), 3) ==
        doctest::Approx(1.0 / 6.0));
  beam.coherence_length = 7e-9;
  CHECK(truncation_validity(beam, PeriodicDiagonalPotential(amps, 1e-3), 1) ==
        doctest::Approx(7e-6));
}
