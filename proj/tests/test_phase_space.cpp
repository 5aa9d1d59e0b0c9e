#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ewf/errors.hpp"
#include "ewf/phase_space.hpp"
#include "support.hpp"

using namespace ewf;

namespace {

// Beam profile written out directly from its closed form.
double reference_profile(const BeamSpec& b, double x, double p) {
  const double ln2 = std::log(2.0);
  const double h = constants::planck;
  const double lc = b.coherence_length;
  return 2.0 * std::sqrt(ln2) * lc / (constants::pi * h * b.beam_width) *
         std::exp(-x * x / (b.beam_width * b.beam_width) - 4.0 * lc * lc * p * p * ln2 / (h * h));
}

PhaseSpaceGrid silver_grid(std::size_t n = 128) {
  return PhaseSpaceGrid(-150e-6, 150e-6, n, -6e-25, 6e-25, n);
}

SpinMatrix random_density(std::mt19937& rng) {
  std::normal_distribution<double> g;
  SpinMatrix a(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) a(i, j) = Complex(g(rng), g(rng));
  SpinMatrix rho = a * a.adjoint();
  return rho / rho.trace().real();
}

}  // namespace

TEST_CASE("grid spacing and node coordinates follow from the index") {
  const PhaseSpaceGrid g(-1.0, 3.0, 5, -2.0, 2.0, 9);
  CHECK(g.dx() == doctest::Approx(1.0));
  CHECK(g.dp() == doctest::Approx(0.5));
  CHECK(g.x(4) == doctest::Approx(3.0));
  CHECK(g.p(0) == -2.0);
  CHECK(g.size() == 45);
  CHECK(g.index(2, 3) == 3 * 5 + 2);

  const auto r = g.refined();
  CHECK(r.n_x() == 9);
  CHECK(r.n_p() == 17);
  for (std::size_t i = 0; i < g.n_x(); ++i) CHECK(r.x(2 * i) == doctest::Approx(g.x(i)));
}

TEST_CASE("invalid grids are rejected") {
  CHECK_THROWS_AS(PhaseSpaceGrid(0.0, 1.0, 1, 0.0, 1.0, 4), InvalidGrid);
  CHECK_THROWS_AS(PhaseSpaceGrid(1.0, 1.0, 4, 0.0, 1.0, 4), InvalidGrid);
  CHECK_THROWS_AS(PhaseSpaceGrid(0.0, 1.0, 4, 2.0, 1.0, 4), InvalidGrid);
  CHECK_THROWS_AS(PhaseSpaceGrid(0.0, NAN, 4, 0.0, 1.0, 4), InvalidGrid);
}

TEST_CASE("beam spread and coherence length multiply to h") {
  const auto b = support::silver_beam();
  CHECK(b.momentum_spread() * b.coherence_length == doctest::Approx(constants::planck).epsilon(1e-14));
  CHECK(b.momentum_spread() == doctest::Approx(9.963238e-26).epsilon(1e-6));
  CHECK(b.momentum_half_width() ==
        doctest::Approx(constants::planck / (2.0 * b.coherence_length * std::sqrt(std::log(2.0)))));
  CHECK_NOTHROW(b.validate());

  auto bad = b;
  bad.mass = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidBeam);
  bad = b;
  bad.coherence_length = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidBeam);
}

TEST_CASE("beam profile matches its closed form and integrates to one") {
  const auto b = support::silver_beam();
  for (double x : {0.0, 12e-6, -40e-6})
    for (double p : {0.0, 5e-26, -1.3e-25})
      CHECK(gaussian_profile(b, x, p) == doctest::Approx(reference_profile(b, x, p)).epsilon(1e-13));

  // Independent midpoint quadrature over +-8 half-widths.
  const double wx = b.beam_width, wp = b.momentum_half_width();
  const int n = 800;
  const double hx = 16.0 * wx / n, hp = 16.0 * wp / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      sum += reference_profile(b, -8.0 * wx + (i + 0.5) * hx, -8.0 * wp + (j + 0.5) * hp);
  CHECK(sum * hx * hp == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("unpolarised and x-polarised states carry the expected spin structure") {
  const auto b = support::silver_beam();
  const auto g = silver_grid();
  const auto unpol = build_gaussian_state(g, b, unpolarised_spin_density());
  const auto xpol = build_gaussian_state(g, b, x_polarised_spin_density());
  for (std::size_t j = 0; j < g.n_p(); j += 7)
    for (std::size_t i = 0; i < g.n_x(); i += 5) {
      const double half = 0.5 * reference_profile(b, g.x(i), g.p(j));
      CHECK(unpol(0, 0, i, j).real() == doctest::Approx(half).epsilon(1e-12));
      CHECK(unpol(1, 1, i, j).real() == doctest::Approx(half).epsilon(1e-12));
      CHECK(unpol(0, 1, i, j) == Complex{});
      CHECK(unpol(1, 0, i, j) == Complex{});
      for (std::size_t eta = 0; eta < 2; ++eta)
        for (std::size_t xi = 0; xi < 2; ++xi)
          CHECK(xpol(eta, xi, i, j).real() == doctest::Approx(half).epsilon(1e-12));
    }
  CHECK(unpol.labels() == std::vector<std::string>{"alpha", "beta"});
}

TEST_CASE("every valid spin density gives unit trace norm and zero Hermiticity defect") {
  std::mt19937 rng(7);
  const auto b = support::silver_beam();
  const auto g = silver_grid();
  for (int k = 0; k < 5; ++k) {
    const auto rho = random_density(rng);
    const auto w = build_gaussian_state(g, b, rho);
    CHECK(trace_norm(w) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(hermiticity_defect(w) == 0.0);
    const auto reduced = reduced_spin_density(w);
    CHECK((reduced - rho).norm() < 1e-6);
  }
}

TEST_CASE("marginals of the Gaussian state are the analytic one-dimensional Gaussians") {
  const auto b = support::silver_beam();
  const auto g = silver_grid();
  const auto w = build_gaussian_state(g, b, unpolarised_spin_density());
  const double wx = b.beam_width, wp = b.momentum_half_width();
  const auto mx = marginal_position(w, 0, 0);
  const auto mp = marginal_momentum(w, 1, 1);
  for (std::size_t i = 0; i < g.n_x(); ++i) {
    const double expect = 0.5 * std::exp(-g.x(i) * g.x(i) / (wx * wx)) / (std::sqrt(constants::pi) * wx);
    CHECK(mx[i].real() == doctest::Approx(expect).epsilon(1e-6));
    CHECK(mx[i].imag() == 0.0);
  }
  for (std::size_t j = 0; j < g.n_p(); ++j) {
    const double expect = 0.5 * std::exp(-g.p(j) * g.p(j) / (wp * wp)) / (std::sqrt(constants::pi) * wp);
    CHECK(mp[j].real() == doctest::Approx(expect).epsilon(1e-6));
  }
  Complex half{};
  const auto wts = trapezoid_weights(g.n_x(), g.dx());
  for (std::size_t i = 0; i < g.n_x(); ++i) half += wts[i] * mx[i];
  CHECK(half.real() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(integrate(w, 0, 0).real() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("trapezoid weights halve the end nodes") {
  const auto w = trapezoid_weights(4, 0.5);
  CHECK(w == std::vector<double>{0.25, 0.5, 0.5, 0.25});
}

TEST_CASE("construction errors") {
  const auto b = support::silver_beam();
  const PhaseSpaceGrid coarse(-150e-6, 150e-6, 8, -6e-25, 6e-25, 128);
  CHECK_THROWS_AS(build_gaussian_state(coarse, b, unpolarised_spin_density()), GridTooCoarse);

  SpinMatrix not_hermitian = unpolarised_spin_density();
  not_hermitian(0, 1) = Complex(0.1, 0.2);
  CHECK_THROWS_AS(build_gaussian_state(silver_grid(), b, not_hermitian), NonHermitianSpinDensity);

  SpinMatrix wrong_trace = unpolarised_spin_density();
  wrong_trace(0, 0) = 0.7;
  CHECK_THROWS_AS(build_gaussian_state(silver_grid(), b, wrong_trace), NonUnitTrace);

  const auto w = build_gaussian_state(silver_grid(), b, unpolarised_spin_density());
  CHECK_THROWS_AS(marginal_position(w, 2, 0), IndexOutOfRange);
  CHECK_THROWS_AS(w.element(0, 5), IndexOutOfRange);
}

TEST_CASE("a corrupted state shows a Hermiticity defect") {
  auto w = build_gaussian_state(silver_grid(), support::silver_beam(), x_polarised_spin_density());
  w(0, 1, 30, 30) += Complex(0.0, 1.0);
  CHECK(hermiticity_defect(w) == doctest::Approx(1.0));
}

TEST_CASE("boundary fraction separates centred and edge states") {
  const auto b = support::silver_beam();
  const auto g = silver_grid();
  const auto centred = build_gaussian_state(g, b, unpolarised_spin_density());
  CHECK(boundary_fraction(centred) < 1e-10);
  const auto edge = build_gaussian_state(g, b, unpolarised_spin_density(), {130e-6, 0.0});
  CHECK(boundary_fraction(edge) > 1e-4);
}

TEST_CASE("spin dimension other than two") {
  const auto b = support::silver_beam();
  const auto w = build_gaussian_state(silver_grid(), b, unpolarised_spin_density(3));
  CHECK(w.dim() == 3);
  CHECK(w.labels() == std::vector<std::string>{"s0", "s1", "s2"});
  CHECK(trace_norm(w) == doctest::Approx(1.0).epsilon(1e-6));
}
