#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "ewf/phase_space.hpp"
#include "ewf/potentials.hpp"

namespace ewf {

enum class Scheme {
  split_first_order,  // Strang: half shear, first-order potential step, half shear
  rk4_general,        // explicit RK4 of the full first-order equation of motion
  closed_form_sg,     // single exact characteristic map (linear diagonal models only)
};

enum class CheckPolicy { ignore, warn, error };

std::string to_string(Scheme scheme);
/// Accepts "split_first_order", "rk4_general", "closed_form_sg"; throws InvalidStepPlan.
Scheme scheme_from_string(const std::string& name);

using WarningSink = std::function<void(const std::string&)>;

/// Edge monitor: flags when more than `tolerance` of the diagonal weight lies
/// within `band` cells of any grid edge.
struct BoundaryGuard {
  CheckPolicy policy = CheckPolicy::error;
  double tolerance = 1e-4;
  std::size_t band = 5;
};

struct StepPlan {
  double dt = 0.0;     // s
  double mass = 0.0;   // kg
  Scheme scheme = Scheme::split_first_order;
  unsigned truncation_order = 1;
  CheckPolicy stability_policy = CheckPolicy::warn;
  BoundaryGuard boundary;
  std::size_t snapshot_every = 0;  // steps between snapshot_hook calls; 0 = final only
  WarningSink on_warning;          // defaults to stderr

  /// Throws InvalidStepPlan for dt <= 0, mass <= 0 or truncation order 0.
  void validate() const;
};

using SnapshotHook = std::function<void(std::size_t step, const WignerMatrix& state)>;

/// dx m / |p|_max: the advective bound for explicit shear sub-steps.
double advective_time_limit(const PhaseSpaceGrid& grid, double mass);

/// Largest level splitting (lambda_max - lambda_min) / hbar of U over the grid's x nodes.
double max_splitting_frequency(const PotentialModel& model, const PhaseSpaceGrid& grid,
                               double t);

/// min(dx m / |p|_max, 2 pi / (50 omega_max)).
double default_time_step(const PhaseSpaceGrid& grid, double mass, const PotentialModel& model,
                         double t = 0.0);

/// Ballistic drift W'(x, p) = W(x - p dt / m, p), linear interpolation along x.
WignerMatrix kinetic_shear(const WignerMatrix& w, double dt, double mass,
                           const BoundaryGuard& guard = {});

/// Potential part of the equation of motion for a model diagonal in the
/// working basis: exact phase-and-momentum-shift solution of the first-order
/// term, plus explicit Euler contributions of the series terms 2..n_max with
/// momentum derivatives by second-order central differences.
WignerMatrix potential_step_diagonal(const WignerMatrix& w, const PotentialModel& model,
                                     double dt, unsigned n_max = 1,
                                     const BoundaryGuard& guard = {});

/// One Strang step (half shear, potential step, half shear). Commuting models
/// that are not diagonal are handled in their common eigenbasis. With
/// n_max = 1 the three sub-steps are composed into a single characteristic
/// map and the input is interpolated once.
WignerMatrix split_step(const WignerMatrix& w, const PotentialModel& model, double dt,
                        double mass, unsigned n_max = 1, const BoundaryGuard& guard = {});

/// One explicit RK4 step of
///   dW/dt = -(p/m) dW/dx + (U W - W U) / (i hbar) - (F dW/dp + dW/dp F) / 2
/// with central differences in x and p and zero values outside the grid.
WignerMatrix step_general(const WignerMatrix& w, const PotentialModel& model, double dt,
                          double mass);

/// Time derivative used by step_general, exposed for diagnostics and tests.
WignerMatrix general_rhs(const WignerMatrix& w, const PotentialModel& model, double t,
                         double mass);

/// Analytic Stern-Gerlach evolution of rho W0(x, p) in a uniaxial gradient:
/// every element follows its classical characteristic under the mean force
/// (F_eta + F_xi) / 2 and picks up the integrated level-difference phase.
WignerMatrix closed_form_sg(const PhaseSpaceGrid& grid, const BeamSpec& beam,
                            const SpinMatrix& spin_density, const UniaxialGradientField& field,
                            double t);

/// Runs ceil(duration / dt) steps of the plan's scheme (last step shortened).
WignerMatrix propagate(WignerMatrix w, const PotentialModel& model, const StepPlan& plan,
                       double duration, const SnapshotHook& hook = {});

}  // namespace ewf
