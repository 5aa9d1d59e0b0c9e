#include "ewf/potentials.hpp"

#include <cmath>

#include "ewf/constants.hpp"
#include "ewf/errors.hpp"

namespace ewf {

ZeemanGradientPotential::ZeemanGradientPotential(UniaxialGradientField field,
                                                 double gyromagnetic_ratio)
    : field_(field), gamma_(gyromagnetic_ratio) {
  if (!std::isfinite(field.field_at_origin) || !std::isfinite(field.gradient) ||
      !std::isfinite(gyromagnetic_ratio))
    throw Error("Zeeman gradient parameters must be finite");
}

SpinMatrix ZeemanGradientPotential::evaluate(double x, double) const {
  const double half = 0.5 * gamma_ * constants::hbar * field_.field(x);
  SpinMatrix u = SpinMatrix::Zero(2, 2);
  u(0, 0) = -half;
  u(1, 1) = half;
  return u;
}

SpinMatrix ZeemanGradientPotential::derivative(double x, double t, unsigned order) const {
  if (order == 0) return evaluate(x, t);
  SpinMatrix d = SpinMatrix::Zero(2, 2);
  if (order == 1) {
    const double half = 0.5 * gamma_ * constants::hbar * field_.effective_gradient();
    d(0, 0) = -half;
    d(1, 1) = half;
  }
  return d;
}

RfRegionPotential::RfRegionPotential(double b1, double gyromagnetic_ratio, double detuning)
    : b1_(b1), gamma_(gyromagnetic_ratio), detuning_(detuning) {
  if (!std::isfinite(b1) || !std::isfinite(gyromagnetic_ratio) || !std::isfinite(detuning))
    throw Error("rf region parameters must be finite");
}

SpinMatrix RfRegionPotential::evaluate(double, double) const {
  const double hbar = constants::hbar;
  SpinMatrix u(2, 2);
  u(0, 0) = -0.5 * hbar * detuning_;
  u(1, 1) = 0.5 * hbar * detuning_;
  u(0, 1) = -0.5 * gamma_ * hbar * b1_;
  u(1, 0) = u(0, 1);
  return u;
}

SpinMatrix RfRegionPotential::derivative(double x, double t, unsigned order) const {
  if (order == 0) return evaluate(x, t);
  return SpinMatrix::Zero(2, 2);
}

double RfRegionPotential::rabi_frequency() const { return std::abs(gamma_ * b1_); }

SpinMatrix FreeSpacePotential::evaluate(double, double) const {
  const auto d = static_cast<Eigen::Index>(dim_);
  return SpinMatrix::Zero(d, d);
}

SpinMatrix FreeSpacePotential::derivative(double x, double t, unsigned) const {
  return evaluate(x, t);
}

PeriodicDiagonalPotential::PeriodicDiagonalPotential(Eigen::VectorXd amplitudes, double period,
                                                     double phase)
    : amplitudes_(std::move(amplitudes)), period_(period), phase_(phase) {
  if (amplitudes_.size() == 0) throw Error("periodic potential needs at least one level");
  if (!(period > 0.0) || !std::isfinite(period)) throw Error("period must be positive");
}

SpinMatrix PeriodicDiagonalPotential::evaluate(double x, double t) const {
  return derivative(x, t, 0);
}

SpinMatrix PeriodicDiagonalPotential::derivative(double x, double, unsigned order) const {
  const double k = 2.0 * constants::pi / period_;
  // d^n/dx^n cos(kx + phi) = k^n cos(kx + phi + n pi / 2)
  const double arg = k * x + phase_ + 0.5 * constants::pi * static_cast<double>(order);
  const double factor = std::pow(k, static_cast<double>(order)) * std::cos(arg);
  const auto d = amplitudes_.size();
  SpinMatrix u = SpinMatrix::Zero(d, d);
  for (Eigen::Index n = 0; n < d; ++n) u(n, n) = amplitudes_(n) * factor;
  return u;
}

ZeemanGradientPotential zeeman_gradient_potential(const UniaxialGradientField& field,
                                                  const BeamSpec& beam) {
  return {field, beam.gyromagnetic_ratio};
}

RfRegionPotential rf_region_potential(double b1, const BeamSpec& beam) {
  return {b1, beam.gyromagnetic_ratio, 0.0};
}

RfRegionPotential rf_region_potential(double b1, const BeamSpec& beam, double field_b_y0,
                                      double omega_rf) {
  return {b1, beam.gyromagnetic_ratio, beam.gyromagnetic_ratio * field_b_y0 - omega_rf};
}

double truncation_validity(const BeamSpec& beam, const PotentialModel& model, unsigned order) {
  if (order == 0) return 1.0;
  const auto degree = model.polynomial_degree();
  if (degree && order > *degree && order >= 2) return 0.0;
  const double length = model.length_scale();
  if (!std::isfinite(length)) return 0.0;
  const double ratio = beam.coherence_length / length;
  return std::pow(ratio, static_cast<double>(order)) / std::tgamma(static_cast<double>(order) + 1);
}

}  // namespace ewf
