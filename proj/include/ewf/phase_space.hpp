#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ewf {

using Complex = std::complex<double>;

/// Small d x d matrix over the internal (spin) index.
using SpinMatrix = Eigen::MatrixXcd;

/// Default tolerance for Hermiticity checks on normalized-scale values.
inline constexpr double kHermiticityTolerance = 1e-10;

/// Uniform node-centred discretization of the (x, p) plane.
///
/// Node (i, j) sits at x = x_min + i dx, p = p_min + j dp with
/// dx = (x_max - x_min) / (n_x - 1). Storage order everywhere in the
/// library is row-major in p: rows are momentum slices, x varies fastest.
class PhaseSpaceGrid {
 public:
  PhaseSpaceGrid(double x_min, double x_max, std::size_t n_x, double p_min, double p_max,
                 std::size_t n_p);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  double p_min() const { return p_min_; }
  double p_max() const { return p_max_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_p() const { return n_p_; }
  double dx() const { return dx_; }
  double dp() const { return dp_; }

  double x(std::size_t i) const { return x_min_ + static_cast<double>(i) * dx_; }
  double p(std::size_t j) const { return p_min_ + static_cast<double>(j) * dp_; }

  std::size_t size() const { return n_x_ * n_p_; }
  std::size_t index(std::size_t i, std::size_t j) const { return j * n_x_ + i; }

  /// Same extent with every cell split in two (n -> 2n - 1); old nodes are kept.
  PhaseSpaceGrid refined() const;

  bool operator==(const PhaseSpaceGrid&) const = default;

 private:
  double x_min_, x_max_;
  std::size_t n_x_;
  double p_min_, p_max_;
  std::size_t n_p_;
  double dx_, dp_;
};

/// Particle species and beam preparation parameters (SI units).
struct BeamSpec {
  double mass = 0.0;                // kg
  double gyromagnetic_ratio = 0.0;  // rad s^-1 T^-1, signed
  double velocity = 0.0;            // longitudinal v_z, m/s
  double beam_width = 0.0;          // 1/e half-width of the x profile, m
  double coherence_length = 0.0;    // l_c, m

  /// Transverse momentum spread h / l_c (the FWHM of the momentum profile).
  double momentum_spread() const;
  /// 1/e half-width of the momentum profile, h / (2 l_c sqrt(ln 2)).
  double momentum_half_width() const;

  /// Throws InvalidBeam unless every quantity is finite and physical.
  void validate() const;

  /// Coherence length for which the Gaussian profile describes a pure state
  /// of the given beam width.
  static double pure_state_coherence_length(double beam_width);
};

/// Matrix-valued Wigner function W_{eta xi}(x, p) sampled on a grid.
class WignerMatrix {
 public:
  WignerMatrix(PhaseSpaceGrid grid, std::size_t dim, std::vector<std::string> labels = {},
               double time = 0.0);

  const PhaseSpaceGrid& grid() const { return grid_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& labels() const { return labels_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  std::span<Complex> element(std::size_t eta, std::size_t xi);
  std::span<const Complex> element(std::size_t eta, std::size_t xi) const;

  Complex& operator()(std::size_t eta, std::size_t xi, std::size_t i, std::size_t j) {
    return values_[(eta * dim_ + xi) * grid_.size() + grid_.index(i, j)];
  }
  const Complex& operator()(std::size_t eta, std::size_t xi, std::size_t i,
                            std::size_t j) const {
    return values_[(eta * dim_ + xi) * grid_.size() + grid_.index(i, j)];
  }

  std::span<Complex> values() { return values_; }
  std::span<const Complex> values() const { return values_; }

  /// Largest |W_{eta xi}| over all pairs and nodes.
  double max_abs() const;

  static std::vector<std::string> default_labels(std::size_t dim);

 private:
  PhaseSpaceGrid grid_;
  std::size_t dim_;
  std::vector<std::string> labels_;
  double time_;
  std::vector<Complex> values_;
};

/// Position of a Gaussian beam centre in phase space.
struct PhaseSpacePoint {
  double x = 0.0;
  double p = 0.0;
};

/// Normalized Gaussian beam profile W0(x, p) for the given beam.
double gaussian_profile(const BeamSpec& beam, double x, double p);

/// W_{eta xi} = rho_{eta xi} W0(x - x0, p - p0).
///
/// Throws GridTooCoarse when either 1/e half-width spans fewer than four
/// nodes, NonHermitianSpinDensity / NonUnitTrace for an invalid rho.
WignerMatrix build_gaussian_state(const PhaseSpaceGrid& grid, const BeamSpec& beam,
                                  const SpinMatrix& spin_density,
                                  PhaseSpacePoint centre = {});

SpinMatrix unpolarised_spin_density(std::size_t dim = 2);
/// Pure state (|alpha> + |beta>) / sqrt(2).
SpinMatrix x_polarised_spin_density();

/// Checks Hermiticity (within tol) and unit trace; throws on failure.
void validate_spin_density(const SpinMatrix& rho, double tol = kHermiticityTolerance);

/// Trapezoid-rule integral over p of W_{eta xi}, one value per x node.
std::vector<Complex> marginal_position(const WignerMatrix& w, std::size_t eta, std::size_t xi);
/// Trapezoid-rule integral over x of W_{eta xi}, one value per p node.
std::vector<Complex> marginal_momentum(const WignerMatrix& w, std::size_t eta, std::size_t xi);

/// Trapezoid-rule integral of W_{eta xi} over the whole grid.
Complex integrate(const WignerMatrix& w, std::size_t eta, std::size_t xi);

/// sum_eta of the integral of W_{eta eta}.
double trace_norm(const WignerMatrix& w);

/// max over nodes and pairs of |W_{eta xi} - conj(W_{xi eta})|.
double hermiticity_defect(const WignerMatrix& w);

/// Fraction of sum_eta |W_{eta eta}| located within `band` cells of any edge.
double boundary_fraction(const WignerMatrix& w, std::size_t band = 5);

/// Reduced spin density: rho_{eta xi} = integral of W_{eta xi}.
SpinMatrix reduced_spin_density(const WignerMatrix& w);

/// Trapezoid weights for a uniform 1-D grid of n nodes with spacing h.
std::vector<double> trapezoid_weights(std::size_t n, double h);

}  // namespace ewf
