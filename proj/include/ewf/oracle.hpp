#pragma once

#include <cstddef>
#include <vector>

#include "ewf/phase_space.hpp"
#include "ewf/potentials.hpp"

namespace ewf::oracle {

/// Uniform 1-D spatial grid of a spinor line.
struct SpinorLine {
  double x_min = 0.0;
  double dx = 0.0;
  std::size_t n = 0;

  double x(std::size_t i) const { return x_min + static_cast<double>(i) * dx; }
};

/// psi_eta(x) = <x, eta | psi> sampled on a uniform line.
struct SpinorWavefunction {
  SpinorLine line;
  std::vector<std::vector<Complex>> components;  // [eta][node]

  std::size_t dim() const { return components.size(); }
  /// sum_eta integral |psi_eta|^2 dx (rectangle rule; exact for band-limited states).
  double norm() const;
};

/// Line whose nodes include every x node of `target`, with spacing
/// target.dx / refine and total extent `padding` times the target extent.
SpinorLine aligned_line(const PhaseSpaceGrid& target, std::size_t refine, double padding = 4.0);

/// Smallest refinement for which the Weyl quadrature represents |p| up to the
/// target's momentum range with a factor-two margin.
std::size_t required_refinement(const PhaseSpaceGrid& target);

/// c_eta (2 pi sigma^2)^(-1/4) exp(-(x - x0)^2 / (4 sigma^2) + i p0 x / hbar),
/// with the spin vector c normalized to unit length.
SpinorWavefunction gaussian_spinor(const SpinorLine& line, double sigma,
                                   const Eigen::VectorXcd& spin, PhaseSpacePoint centre = {});

/// Throws BandLimitViolation when any component has spectral weight above
/// 1e-6 of its peak in the upper half of the line's wavenumber band.
void check_band_limit(const SpinorWavefunction& psi);

/// Throws SupportOverflow when |psi| exceeds 1e-6 of its peak within the
/// outer eighth of the line at either end.
void check_support(const SpinorWavefunction& psi);

/// Strang split-step solution of
///   i hbar d psi_eta / dt = -(hbar^2 / 2m) d^2 psi_eta / dx^2 + U_{eta xi}(x, t) psi_xi
/// with the kinetic factor applied exactly in wavenumber space on a periodic
/// line and the potential applied as the node-wise matrix exponential.
SpinorWavefunction schrodinger_split_step(const SpinorWavefunction& psi,
                                          const PotentialModel& model, double mass, double dt,
                                          std::size_t steps, double t0 = 0.0);

/// Direct Weyl quadrature
///   W_{eta xi}(x, p) = (1/h) sum_s exp(-i p s / hbar) psi_eta(x + s/2) conj(psi_xi(x - s/2)) ds
/// with s = 2 k dx_line. Target x nodes must coincide with line nodes and the
/// target momentum range must satisfy |p| <= pi hbar / (2 dx_line).
WignerMatrix wigner_transform(const SpinorWavefunction& psi, const PhaseSpaceGrid& target);

/// rho(t) = exp(-i U t / hbar) rho exp(+i U t / hbar) for constant Hermitian U.
SpinMatrix two_level_ode(const SpinMatrix& rho, const SpinMatrix& potential, double t);

/// max |a - b| over every pair and node; grids and dimensions must match.
double linf_difference(const WignerMatrix& a, const WignerMatrix& b);

}  // namespace ewf::oracle
