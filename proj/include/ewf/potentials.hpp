#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include "ewf/phase_space.hpp"

namespace ewf {

/// Hermitian potential-energy matrix U_{eta xi}(x, t) acting on the internal index.
///
/// All values are in J; derivative(x, t, n) returns d^n U / dx^n in J/m^n.
/// Implementations must be pure and reentrant: grid loops evaluate them
/// concurrently.
class PotentialModel {
 public:
  virtual ~PotentialModel() = default;

  virtual std::size_t dim() const = 0;
  virtual SpinMatrix evaluate(double x, double t) const = 0;
  virtual SpinMatrix derivative(double x, double t, unsigned order) const = 0;

  /// F_{eta xi} = -dU_{eta xi}/dx.
  SpinMatrix force(double x, double t) const { return -derivative(x, t, 1); }

  /// True when U(x1, t) and U(x2, t) commute for every x1, x2.
  virtual bool commuting() const = 0;
  /// True when every off-diagonal entry of U is identically zero.
  virtual bool diagonal() const = 0;
  /// Length scale L of spatial variation; infinity for linear or constant models.
  virtual double length_scale() const = 0;
  /// Highest derivative order that can be nonzero, or nullopt if unbounded.
  virtual std::optional<unsigned> polynomial_degree() const = 0;

  virtual std::string name() const = 0;
};

/// Field B = (B_y0 + polarity * G_xy * x) e_y.
struct UniaxialGradientField {
  double field_at_origin = 0.0;  // B_y0, T
  double gradient = 0.0;         // G_xy, T/m
  int polarity = +1;             // -1 reverses the gradient (refocusing magnets)

  double effective_gradient() const { return polarity >= 0 ? gradient : -gradient; }
  double field(double x) const { return field_at_origin + effective_gradient() * x; }
};

/// Zeeman energy of a spin-1/2 in a uniaxial gradient, written in the S_y
/// eigenbasis: U_aa = -(gamma hbar / 2) B_y(x), U_bb = +(gamma hbar / 2) B_y(x).
class ZeemanGradientPotential final : public PotentialModel {
 public:
  ZeemanGradientPotential(UniaxialGradientField field, double gyromagnetic_ratio);

  std::size_t dim() const override { return 2; }
  SpinMatrix evaluate(double x, double t) const override;
  SpinMatrix derivative(double x, double t, unsigned order) const override;
  bool commuting() const override { return true; }
  bool diagonal() const override { return true; }
  double length_scale() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<unsigned> polynomial_degree() const override { return 1u; }
  std::string name() const override { return "zeeman_gradient"; }

  const UniaxialGradientField& field() const { return field_; }
  double gyromagnetic_ratio() const { return gamma_; }

 private:
  UniaxialGradientField field_;
  double gamma_;
};

/// Homogeneous rf region in the frame rotating with the rf field.
///
/// U_ab = U_ba = -(gamma hbar / 2) B1 and U_aa = -U_bb = -hbar Delta / 2 with
/// Delta = gamma B_y0 - omega_rf. The resonance offset is an extension of the
/// static-B1 model (Delta = 0 reproduces it) used to scan B_y0.
class RfRegionPotential final : public PotentialModel {
 public:
  RfRegionPotential(double b1, double gyromagnetic_ratio, double detuning = 0.0);

  std::size_t dim() const override { return 2; }
  SpinMatrix evaluate(double x, double t) const override;
  SpinMatrix derivative(double x, double t, unsigned order) const override;
  bool commuting() const override { return true; }
  bool diagonal() const override { return b1_ == 0.0; }
  double length_scale() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<unsigned> polynomial_degree() const override { return 0u; }
  std::string name() const override { return "rf_region"; }

  double b1() const { return b1_; }
  double detuning() const { return detuning_; }
  /// Nutation frequency on resonance, |gamma B1|.
  double rabi_frequency() const;

 private:
  double b1_;
  double gamma_;
  double detuning_;
};

/// U = 0 for every internal state (free flight, detector drift).
class FreeSpacePotential final : public PotentialModel {
 public:
  explicit FreeSpacePotential(std::size_t dim = 2) : dim_(dim) {}

  std::size_t dim() const override { return dim_; }
  SpinMatrix evaluate(double, double) const override;
  SpinMatrix derivative(double, double, unsigned) const override;
  bool commuting() const override { return true; }
  bool diagonal() const override { return true; }
  double length_scale() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<unsigned> polynomial_degree() const override { return 0u; }
  std::string name() const override { return "free_space"; }

 private:
  std::size_t dim_;
};

/// U_{eta eta}(x) = amplitude_eta cos(2 pi x / L + phase); off-diagonals zero.
/// A smooth non-polynomial model with a finite length scale L.
class PeriodicDiagonalPotential final : public PotentialModel {
 public:
  PeriodicDiagonalPotential(Eigen::VectorXd amplitudes, double period, double phase = 0.0);

  std::size_t dim() const override { return static_cast<std::size_t>(amplitudes_.size()); }
  SpinMatrix evaluate(double x, double t) const override;
  SpinMatrix derivative(double x, double t, unsigned order) const override;
  bool commuting() const override { return true; }
  bool diagonal() const override { return true; }
  double length_scale() const override { return period_; }
  std::optional<unsigned> polynomial_degree() const override { return std::nullopt; }
  std::string name() const override { return "periodic_diagonal"; }

 private:
  Eigen::VectorXd amplitudes_;
  double period_;
  double phase_;
};

ZeemanGradientPotential zeeman_gradient_potential(const UniaxialGradientField& field,
                                                  const BeamSpec& beam);

RfRegionPotential rf_region_potential(double b1, const BeamSpec& beam);

/// Rotating-frame rf region with resonance offset Delta = gamma B_y0 - omega_rf.
RfRegionPotential rf_region_potential(double b1, const BeamSpec& beam, double field_b_y0,
                                      double omega_rf);

/// (l_c / L)^n / n!, the relative size of the order-n series term.
/// Returns 0 when the model is polynomial of degree below n or L is infinite.
double truncation_validity(const BeamSpec& beam, const PotentialModel& model, unsigned order);

}  // namespace ewf
