#include "ewf/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ewf/constants.hpp"
#include "ewf/errors.hpp"

namespace ewf {

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

PhaseSpaceGrid::PhaseSpaceGrid(double x_min, double x_max, std::size_t n_x, double p_min,
                               double p_max, std::size_t n_p)
    : x_min_(x_min), x_max_(x_max), n_x_(n_x), p_min_(p_min), p_max_(p_max), n_p_(n_p) {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && x_max > x_min))
    throw InvalidGrid("grid requires finite x_max > x_min");
  if (!(std::isfinite(p_min) && std::isfinite(p_max) && p_max > p_min))
    throw InvalidGrid("grid requires finite p_max > p_min");
  if (n_x < 2 || n_p < 2) throw InvalidGrid("grid requires at least 2 nodes per axis");
  dx_ = (x_max - x_min) / static_cast<double>(n_x - 1);
  dp_ = (p_max - p_min) / static_cast<double>(n_p - 1);
}

PhaseSpaceGrid PhaseSpaceGrid::refined() const {
  return {x_min_, x_max_, 2 * n_x_ - 1, p_min_, p_max_, 2 * n_p_ - 1};
}

double BeamSpec::momentum_spread() const { return constants::planck / coherence_length; }

double BeamSpec::momentum_half_width() const {
  return constants::planck / (2.0 * coherence_length * std::sqrt(std::log(2.0)));
}

void BeamSpec::validate() const {
  if (!finite_positive(mass)) throw InvalidBeam("beam mass must be positive");
  if (!std::isfinite(gyromagnetic_ratio) || gyromagnetic_ratio == 0.0)
    throw InvalidBeam("gyromagnetic ratio must be finite and nonzero");
  if (!finite_positive(velocity)) throw InvalidBeam("beam velocity must be positive");
  if (!finite_positive(beam_width)) throw InvalidBeam("beam width must be positive");
  if (!finite_positive(coherence_length))
    throw InvalidBeam("coherence length must be positive");
}

double BeamSpec::pure_state_coherence_length(double beam_width) {
  // A pure Gaussian packet of spatial standard deviation sigma has
  // W ~ exp(-x^2 / (2 sigma^2) - 2 sigma^2 p^2 / hbar^2); matching both
  // widths of the beam profile gives l_c = pi * beam_width / sqrt(ln 2).
  return constants::pi * beam_width / std::sqrt(std::log(2.0));
}

WignerMatrix::WignerMatrix(PhaseSpaceGrid grid, std::size_t dim,
                           std::vector<std::string> labels, double time)
    : grid_(std::move(grid)), dim_(dim), labels_(std::move(labels)), time_(time) {
  if (dim_ == 0) throw IndexOutOfRange("internal dimension must be positive");
  if (labels_.empty()) labels_ = default_labels(dim_);
  if (labels_.size() != dim_) throw IndexOutOfRange("label count differs from dimension");
  values_.assign(dim_ * dim_ * grid_.size(), Complex{});
}

std::vector<std::string> WignerMatrix::default_labels(std::size_t dim) {
  if (dim == 2) return {"alpha", "beta"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < dim; ++k) out.push_back("s" + std::to_string(k));
  return out;
}

std::span<Complex> WignerMatrix::element(std::size_t eta, std::size_t xi) {
  if (eta >= dim_ || xi >= dim_) throw IndexOutOfRange("spin-pair index out of range");
  return {values_.data() + (eta * dim_ + xi) * grid_.size(), grid_.size()};
}

std::span<const Complex> WignerMatrix::element(std::size_t eta, std::size_t xi) const {
  if (eta >= dim_ || xi >= dim_) throw IndexOutOfRange("spin-pair index out of range");
  return {values_.data() + (eta * dim_ + xi) * grid_.size(), grid_.size()};
}

double WignerMatrix::max_abs() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, std::abs(v));
  return m;
}

double gaussian_profile(const BeamSpec& beam, double x, double p) {
  const double ln2 = std::log(2.0);
  const double h = constants::planck;
  const double lc = beam.coherence_length;
  const double dx = beam.beam_width;
  const double amplitude = 2.0 * std::sqrt(ln2) * lc / (constants::pi * h * dx);
  return amplitude * std::exp(-x * x / (dx * dx) - 4.0 * lc * lc * p * p * ln2 / (h * h));
}

void validate_spin_density(const SpinMatrix& rho, double tol) {
  if (rho.rows() != rho.cols() || rho.rows() == 0)
    throw NonHermitianSpinDensity("spin density must be a non-empty square matrix");
  const double defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (defect > tol) {
    std::ostringstream msg;
    msg << "spin density is not Hermitian (defect " << defect << ")";
    throw NonHermitianSpinDensity(msg.str());
  }
  const Complex tr = rho.trace();
  if (std::abs(tr - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "spin density trace is " << tr.real() << ", expected 1";
    throw NonUnitTrace(msg.str());
  }
}

WignerMatrix build_gaussian_state(const PhaseSpaceGrid& grid, const BeamSpec& beam,
                                  const SpinMatrix& spin_density, PhaseSpacePoint centre) {
  beam.validate();
  validate_spin_density(spin_density);
  const double nodes_x = beam.beam_width / grid.dx();
  const double nodes_p = beam.momentum_half_width() / grid.dp();
  if (nodes_x < 4.0 || nodes_p < 4.0) {
    std::ostringstream msg;
    msg << "Gaussian half-widths span " << nodes_x << " (x) and " << nodes_p
        << " (p) nodes; at least 4 are required";
    throw GridTooCoarse(msg.str());
  }

  const auto dim = static_cast<std::size_t>(spin_density.rows());
  WignerMatrix w(grid, dim);
  std::vector<double> profile(grid.size());
  for (std::size_t j = 0; j < grid.n_p(); ++j)
    for (std::size_t i = 0; i < grid.n_x(); ++i)
      profile[grid.index(i, j)] =
          gaussian_profile(beam, grid.x(i) - centre.x, grid.p(j) - centre.p);

  for (std::size_t eta = 0; eta < dim; ++eta) {
    for (std::size_t xi = 0; xi < dim; ++xi) {
      Complex rho = spin_density(static_cast<Eigen::Index>(eta), static_cast<Eigen::Index>(xi));
      // Store exactly Hermitian values: the lower triangle mirrors the upper.
      if (eta > xi) rho = std::conj(spin_density(static_cast<Eigen::Index>(xi),
                                                 static_cast<Eigen::Index>(eta)));
      if (eta == xi) rho = rho.real();
      auto el = w.element(eta, xi);
      for (std::size_t n = 0; n < el.size(); ++n) el[n] = rho * profile[n];
    }
  }
  return w;
}

SpinMatrix unpolarised_spin_density(std::size_t dim) {
  SpinMatrix rho = SpinMatrix::Identity(static_cast<Eigen::Index>(dim),
                                        static_cast<Eigen::Index>(dim));
  return rho / static_cast<double>(dim);
}

SpinMatrix x_polarised_spin_density() {
  SpinMatrix rho(2, 2);
  rho.setConstant(Complex{0.5, 0.0});
  return rho;
}

std::vector<double> trapezoid_weights(std::size_t n, double h) {
  std::vector<double> w(n, h);
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

std::vector<Complex> marginal_position(const WignerMatrix& w, std::size_t eta, std::size_t xi) {
  const auto& g = w.grid();
  const auto el = w.element(eta, xi);
  const auto wp = trapezoid_weights(g.n_p(), g.dp());
  std::vector<Complex> out(g.n_x(), Complex{});
  for (std::size_t j = 0; j < g.n_p(); ++j)
    for (std::size_t i = 0; i < g.n_x(); ++i) out[i] += wp[j] * el[g.index(i, j)];
  if (eta == xi)
    for (auto& v : out) v = v.real();
  return out;
}

std::vector<Complex> marginal_momentum(const WignerMatrix& w, std::size_t eta, std::size_t xi) {
  const auto& g = w.grid();
  const auto el = w.element(eta, xi);
  const auto wx = trapezoid_weights(g.n_x(), g.dx());
  std::vector<Complex> out(g.n_p(), Complex{});
  for (std::size_t j = 0; j < g.n_p(); ++j) {
    Complex acc{};
    for (std::size_t i = 0; i < g.n_x(); ++i) acc += wx[i] * el[g.index(i, j)];
    out[j] = eta == xi ? Complex{acc.real(), 0.0} : acc;
  }
  return out;
}

Complex integrate(const WignerMatrix& w, std::size_t eta, std::size_t xi) {
  const auto& g = w.grid();
  const auto m = marginal_momentum(w, eta, xi);
  const auto wp = trapezoid_weights(g.n_p(), g.dp());
  Complex acc{};
  for (std::size_t j = 0; j < g.n_p(); ++j) acc += wp[j] * m[j];
  return acc;
}

double trace_norm(const WignerMatrix& w) {
  double acc = 0.0;
  for (std::size_t eta = 0; eta < w.dim(); ++eta) acc += integrate(w, eta, eta).real();
  return acc;
}

double hermiticity_defect(const WignerMatrix& w) {
  double defect = 0.0;
  for (std::size_t eta = 0; eta < w.dim(); ++eta) {
    for (std::size_t xi = eta; xi < w.dim(); ++xi) {
      const auto a = w.element(eta, xi);
      const auto b = w.element(xi, eta);
      for (std::size_t n = 0; n < a.size(); ++n)
        defect = std::max(defect, std::abs(a[n] - std::conj(b[n])));
    }
  }
  return defect;
}

double boundary_fraction(const WignerMatrix& w, std::size_t band) {
  const auto& g = w.grid();
  double total = 0.0;
  double edge = 0.0;
  for (std::size_t eta = 0; eta < w.dim(); ++eta) {
    const auto el = w.element(eta, eta);
    for (std::size_t j = 0; j < g.n_p(); ++j) {
      const bool edge_row = j < band || j + band >= g.n_p();
      for (std::size_t i = 0; i < g.n_x(); ++i) {
        const double v = std::abs(el[g.index(i, j)]);
        total += v;
        if (edge_row || i < band || i + band >= g.n_x()) edge += v;
      }
    }
  }
  return total > 0.0 ? edge / total : 0.0;
}

SpinMatrix reduced_spin_density(const WignerMatrix& w) {
  const auto d = static_cast<Eigen::Index>(w.dim());
  SpinMatrix rho(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b)
      rho(a, b) = integrate(w, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  return rho;
}

}  // namespace ewf
