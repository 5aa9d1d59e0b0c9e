#include "ewf/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ewf/constants.hpp"
#include "ewf/errors.hpp"

namespace ewf {

namespace {

using constants::hbar;

constexpr Complex kI{0.0, 1.0};

// Read-only view of one spin-pair plane with zero values outside the grid.
class PlaneSampler {
 public:
  PlaneSampler(const Complex* data, const PhaseSpaceGrid& grid) : data_(data), grid_(grid) {}

  Complex node(long i, long j) const {
    if (i < 0 || j < 0 || i >= static_cast<long>(grid_.n_x()) ||
        j >= static_cast<long>(grid_.n_p()))
      return {};
    return data_[static_cast<std::size_t>(j) * grid_.n_x() + static_cast<std::size_t>(i)];
  }

  // Linear interpolation along x within row j; fx is a fractional node index.
  Complex along_x(long j, double fx) const {
    if (!(fx > -1.0 && fx < static_cast<double>(grid_.n_x()))) return {};
    const double f = std::floor(fx);
    const double a = fx - f;
    const long i0 = static_cast<long>(f);
    if (a == 0.0) return node(i0, j);
    return (1.0 - a) * node(i0, j) + a * node(i0 + 1, j);
  }

  Complex along_p(long i, double fp) const {
    if (!(fp > -1.0 && fp < static_cast<double>(grid_.n_p()))) return {};
    const double f = std::floor(fp);
    const double b = fp - f;
    const long j0 = static_cast<long>(f);
    if (b == 0.0) return node(i, j0);
    return (1.0 - b) * node(i, j0) + b * node(i, j0 + 1);
  }

  Complex bilinear(double x, double p) const {
    const double fx = (x - grid_.x_min()) / grid_.dx();
    const double fp = (p - grid_.p_min()) / grid_.dp();
    if (!(fp > -1.0 && fp < static_cast<double>(grid_.n_p()))) return {};
    const double f = std::floor(fp);
    const double b = fp - f;
    const long j0 = static_cast<long>(f);
    if (b == 0.0) return along_x(j0, fx);
    return (1.0 - b) * along_x(j0, fx) + b * along_x(j0 + 1, fx);
  }

 private:
  const Complex* data_;
  const PhaseSpaceGrid& grid_;
};

void emit_warning(const WarningSink& sink, const std::string& msg) {
  if (sink)
    sink(msg);
  else
    std::cerr << "warning: " << msg << '\n';
}

void apply_guard(const WignerMatrix& w, const BoundaryGuard& guard, const char* where,
                 std::size_t min_band = 0, const WarningSink& sink = {}) {
  if (guard.policy == CheckPolicy::ignore) return;
  const double frac = boundary_fraction(w, std::max(guard.band, min_band));
  if (frac <= guard.tolerance) return;
  std::ostringstream msg;
  msg << where << ": " << frac << " of the diagonal weight lies within "
      << std::max(guard.band, min_band) << " cells of the grid edge";
  if (guard.policy == CheckPolicy::error) throw BoundaryOverflow(msg.str());
  emit_warning(sink, msg.str());
}

// Working basis in which a commuting model is diagonal. For models that are
// already diagonal the basis is the identity and no rotation is performed.
struct DiagonalBasis {
  bool identity = true;
  SpinMatrix v;  // columns are common eigenvectors

  static DiagonalBasis of(const PotentialModel& model, const PhaseSpaceGrid& grid, double t) {
    DiagonalBasis basis;
    if (model.diagonal()) return basis;
    if (!model.commuting())
      throw NonCommutingModel("model " + model.name() + " does not commute across positions");
    // A generic combination of commuting Hermitian matrices has the common
    // eigenvectors and, generically, no accidental degeneracy.
    const double xa = grid.x_min() + 0.37 * (grid.x_max() - grid.x_min());
    const double xb = grid.x_min() + 0.81 * (grid.x_max() - grid.x_min());
    SpinMatrix probe = model.evaluate(xa, t) + 0.6180339887 * model.evaluate(xb, t);
    Eigen::SelfAdjointEigenSolver<SpinMatrix> solver(probe);
    basis.identity = false;
    basis.v = solver.eigenvectors();
    return basis;
  }

  SpinMatrix to_working(const SpinMatrix& m) const {
    return identity ? m : SpinMatrix(v.adjoint() * m * v);
  }
};

// Diagonal entries (real) of d^n U / dx^n in the working basis.
Eigen::VectorXd level_derivative(const PotentialModel& model, const DiagonalBasis& basis,
                                 double x, double t, unsigned order) {
  const SpinMatrix m = basis.to_working(model.derivative(x, t, order));
  return m.diagonal().real();
}

// Applies W -> V^dagger W V (forward) or V W V^dagger (backward) at every node.
WignerMatrix rotate_state(const WignerMatrix& w, const SpinMatrix& v, bool forward) {
  const std::size_t d = w.dim();
  const std::size_t n = w.grid().size();
  WignerMatrix out(w.grid(), d, w.labels(), w.time());
  const SpinMatrix left = forward ? SpinMatrix(v.adjoint()) : v;
  const SpinMatrix right = forward ? v : SpinMatrix(v.adjoint());
  const auto in = w.values();
  auto dst = out.values();
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < n; ++k) {
    SpinMatrix node(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        node(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = in[(a * d + b) * n + k];
    const SpinMatrix r = left * node * right;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        dst[(a * d + b) * n + k] = r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return out;
}

// n-th momentum derivative of one plane by second-order central differences.
std::vector<Complex> momentum_derivative(std::span<const Complex> plane,
                                         const PhaseSpaceGrid& grid, unsigned order) {
  const std::size_t nx = grid.n_x();
  const std::size_t np = grid.n_p();
  std::vector<Complex> cur(plane.begin(), plane.end());
  std::vector<Complex> next(cur.size());
  auto at = [&](const std::vector<Complex>& f, std::size_t i, long j) -> Complex {
    if (j < 0 || j >= static_cast<long>(np)) return {};
    return f[static_cast<std::size_t>(j) * nx + i];
  };
  const double dp = grid.dp();
  unsigned remaining = order;
  if (remaining % 2 == 1) {
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const long jj = static_cast<long>(j);
        next[j * nx + i] = (at(cur, i, jj + 1) - at(cur, i, jj - 1)) / (2.0 * dp);
      }
    std::swap(cur, next);
    --remaining;
  }
  for (; remaining > 0; remaining -= 2) {
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const long jj = static_cast<long>(j);
        next[j * nx + i] =
            (at(cur, i, jj + 1) - 2.0 * cur[j * nx + i] + at(cur, i, jj - 1)) / (dp * dp);
      }
    std::swap(cur, next);
  }
  return cur;
}

// Potential step in a basis where the model is diagonal; see
// potential_step_diagonal for the contract.
WignerMatrix diagonal_potential_step(const WignerMatrix& w, const PotentialModel& model,
                                     const DiagonalBasis& basis, double dt, unsigned n_max) {
  const auto& g = w.grid();
  const std::size_t d = w.dim();
  const double t = w.time();
  const double t_mid = t + 0.5 * dt;
  WignerMatrix out(g, d, w.labels(), t + dt);

  std::vector<Eigen::VectorXd> energy(g.n_x()), force(g.n_x());
  for (std::size_t i = 0; i < g.n_x(); ++i) {
    energy[i] = level_derivative(model, basis, g.x(i), t_mid, 0);
    force[i] = -level_derivative(model, basis, g.x(i), t_mid, 1);
  }

  for (std::size_t eta = 0; eta < d; ++eta) {
    for (std::size_t xi = 0; xi < d; ++xi) {
      const auto src = w.element(eta, xi);
      auto dst = out.element(eta, xi);
      PlaneSampler sampler(src.data(), g);
      const auto e = static_cast<Eigen::Index>(eta);
      const auto x = static_cast<Eigen::Index>(xi);
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < g.n_x(); ++i) {
        const double mean_force = 0.5 * (force[i](e) + force[i](x));
        const Complex phase = std::exp(-kI * (energy[i](e) - energy[i](x)) * dt / hbar);
        const double shift = mean_force * dt / g.dp();
        for (std::size_t j = 0; j < g.n_p(); ++j)
          dst[g.index(i, j)] =
              phase * sampler.along_p(static_cast<long>(i), static_cast<double>(j) - shift);
      }

      for (unsigned n = 2; n <= n_max; ++n) {
        // (1 / i hbar) (1/n!) (hbar / 2i)^n
        const Complex coeff = 1.0 / (kI * hbar) / std::tgamma(static_cast<double>(n) + 1.0) *
                              std::pow(hbar / (2.0 * kI), static_cast<int>(n));
        std::vector<Eigen::VectorXd> dn(g.n_x());
        bool all_zero = true;
        for (std::size_t i = 0; i < g.n_x(); ++i) {
          dn[i] = level_derivative(model, basis, g.x(i), t_mid, n);
          if (dn[i].cwiseAbs().maxCoeff() != 0.0) all_zero = false;
        }
        if (all_zero) continue;
        const auto deriv = momentum_derivative(src, g, n);
        const double sign = n % 2 == 0 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < g.n_p(); ++j)
          for (std::size_t i = 0; i < g.n_x(); ++i) {
            const double bracket = sign * dn[i](e) - dn[i](x);
            dst[g.index(i, j)] += dt * coeff * deriv[g.index(i, j)] * bracket;
          }
      }
    }
  }
  return out;
}

// Half shear, first-order potential step and half shear composed into one
// characteristic map: each output node reads the input once.
WignerMatrix fused_split_step(const WignerMatrix& w, const PotentialModel& model,
                              const DiagonalBasis& basis, double dt, double mass) {
  const auto& g = w.grid();
  const std::size_t d = w.dim();
  const double t_mid = w.time() + 0.5 * dt;
  WignerMatrix out(g, d, w.labels(), w.time() + dt);
  const std::size_t pairs = d * d;

#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < g.n_p(); ++j) {
    const double p = g.p(j);
    std::vector<Complex> values(pairs);
    for (std::size_t i = 0; i < g.n_x(); ++i) {
      const double x_mid = g.x(i) - 0.5 * p * dt / mass;
      const Eigen::VectorXd energy = level_derivative(model, basis, x_mid, t_mid, 0);
      const Eigen::VectorXd force = -level_derivative(model, basis, x_mid, t_mid, 1);
      for (std::size_t eta = 0; eta < d; ++eta) {
        for (std::size_t xi = 0; xi < d; ++xi) {
          const auto e = static_cast<Eigen::Index>(eta);
          const auto x = static_cast<Eigen::Index>(xi);
          const double p_dep = p - 0.5 * (force(e) + force(x)) * dt;
          const double x_dep = x_mid - 0.5 * p_dep * dt / mass;
          const Complex phase = std::exp(-kI * (energy(e) - energy(x)) * dt / hbar);
          PlaneSampler sampler(w.element(eta, xi).data(), g);
          out(eta, xi, i, j) = phase * sampler.bilinear(x_dep, p_dep);
        }
      }
    }
  }
  return out;
}

}  // namespace

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::split_first_order:
      return "split_first_order";
    case Scheme::rk4_general:
      return "rk4_general";
    case Scheme::closed_form_sg:
      return "closed_form_sg";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "split_first_order") return Scheme::split_first_order;
  if (name == "rk4_general") return Scheme::rk4_general;
  if (name == "closed_form_sg") return Scheme::closed_form_sg;
  throw InvalidStepPlan("unknown scheme '" + name + "'");
}

void StepPlan::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidStepPlan("time step must be positive");
  if (!(mass > 0.0) || !std::isfinite(mass)) throw InvalidStepPlan("mass must be positive");
  if (truncation_order == 0) throw InvalidStepPlan("truncation order must be at least 1");
}

double advective_time_limit(const PhaseSpaceGrid& grid, double mass) {
  const double p_max = std::max(std::abs(grid.p_min()), std::abs(grid.p_max()));
  return grid.dx() * mass / p_max;
}

double max_splitting_frequency(const PotentialModel& model, const PhaseSpaceGrid& grid,
                               double t) {
  double omega = 0.0;
  for (std::size_t i = 0; i < grid.n_x(); ++i) {
    Eigen::SelfAdjointEigenSolver<SpinMatrix> solver(model.evaluate(grid.x(i), t),
                                                     Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    omega = std::max(omega, (ev.maxCoeff() - ev.minCoeff()) / hbar);
  }
  return omega;
}

double default_time_step(const PhaseSpaceGrid& grid, double mass, const PotentialModel& model,
                         double t) {
  double dt = advective_time_limit(grid, mass);
  const double omega = max_splitting_frequency(model, grid, t);
  if (omega > 0.0) dt = std::min(dt, 2.0 * constants::pi / (50.0 * omega));
  return dt;
}

WignerMatrix kinetic_shear(const WignerMatrix& w, double dt, double mass,
                           const BoundaryGuard& guard) {
  if (!(mass > 0.0)) throw InvalidStepPlan("mass must be positive");
  const auto& g = w.grid();
  WignerMatrix out(g, w.dim(), w.labels(), w.time() + dt);
  if (dt == 0.0) {
    std::copy(w.values().begin(), w.values().end(), out.values().begin());
    return out;
  }
  for (std::size_t eta = 0; eta < w.dim(); ++eta) {
    for (std::size_t xi = 0; xi < w.dim(); ++xi) {
      PlaneSampler sampler(w.element(eta, xi).data(), g);
      auto dst = out.element(eta, xi);
#pragma omp parallel for schedule(static)
      for (std::size_t j = 0; j < g.n_p(); ++j) {
        const double shift = g.p(j) * dt / mass / g.dx();
        for (std::size_t i = 0; i < g.n_x(); ++i)
          dst[g.index(i, j)] =
              sampler.along_x(static_cast<long>(j), static_cast<double>(i) - shift);
      }
    }
  }
  apply_guard(out, guard, "kinetic shear");
  return out;
}

WignerMatrix potential_step_diagonal(const WignerMatrix& w, const PotentialModel& model,
                                     double dt, unsigned n_max, const BoundaryGuard& guard) {
  if (!model.commuting())
    throw NonCommutingModel("model " + model.name() + " does not commute across positions");
  if (!model.diagonal())
    throw NonCommutingModel("model " + model.name() + " is not diagonal in the working basis");
  if (model.dim() != w.dim()) throw IndexOutOfRange("model and state dimensions differ");
  if (n_max == 0) throw InvalidStepPlan("truncation order must be at least 1");
  auto out = diagonal_potential_step(w, model, DiagonalBasis{}, dt, n_max);
  apply_guard(out, guard, "potential step", n_max);
  return out;
}

WignerMatrix split_step(const WignerMatrix& w, const PotentialModel& model, double dt,
                        double mass, unsigned n_max, const BoundaryGuard& guard) {
  if (model.dim() != w.dim()) throw IndexOutOfRange("model and state dimensions differ");
  if (!(mass > 0.0)) throw InvalidStepPlan("mass must be positive");
  if (n_max == 0) throw InvalidStepPlan("truncation order must be at least 1");
  const DiagonalBasis basis = DiagonalBasis::of(model, w.grid(), w.time());

  WignerMatrix work = basis.identity ? w : rotate_state(w, basis.v, true);
  if (n_max == 1) {
    work = fused_split_step(work, model, basis, dt, mass);
  } else {
    const BoundaryGuard quiet{CheckPolicy::ignore};
    work = kinetic_shear(work, 0.5 * dt, mass, quiet);
    work = diagonal_potential_step(work, model, basis, dt, n_max);
    work = kinetic_shear(work, 0.5 * dt, mass, quiet);
    work.set_time(w.time() + dt);
  }
  if (!basis.identity) work = rotate_state(work, basis.v, false);
  apply_guard(work, guard, "split step", n_max);
  return work;
}

namespace {

// Flattened per-x-node matrices: m[(i * d + a) * d + b].
std::vector<Complex> tabulate(const PotentialModel& model, const PhaseSpaceGrid& g, double t,
                              unsigned order) {
  const std::size_t d = model.dim();
  std::vector<Complex> out(g.n_x() * d * d);
  for (std::size_t i = 0; i < g.n_x(); ++i) {
    const SpinMatrix m = model.derivative(g.x(i), t, order);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        out[(i * d + a) * d + b] = m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return out;
}

void rhs_into(std::span<const Complex> w, std::span<Complex> out, const PhaseSpaceGrid& g,
              std::size_t d, const std::vector<Complex>& u, const std::vector<Complex>& dudx,
              double mass) {
  const std::size_t n = g.size();
  const std::size_t nx = g.n_x();
  const std::size_t np = g.n_p();
  const double inv2dx = 1.0 / (2.0 * g.dx());
  const double inv2dp = 1.0 / (2.0 * g.dp());
  const Complex inv_ihbar = 1.0 / (kI * hbar);

  auto value = [&](std::size_t pair, long i, long j) -> Complex {
    if (i < 0 || j < 0 || i >= static_cast<long>(nx) || j >= static_cast<long>(np)) return {};
    return w[pair * n + static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)];
  };

#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < np; ++j) {
    const double p = g.p(j);
    std::vector<Complex> wn(d * d), dwdp(d * d);
    for (std::size_t i = 0; i < nx; ++i) {
      const long ii = static_cast<long>(i);
      const long jj = static_cast<long>(j);
      for (std::size_t pair = 0; pair < d * d; ++pair) {
        wn[pair] = value(pair, ii, jj);
        dwdp[pair] = (value(pair, ii, jj + 1) - value(pair, ii, jj - 1)) * inv2dp;
      }
      const Complex* ui = &u[i * d * d];
      // F = -dU/dx, so -(F dW/dp + dW/dp F)/2 = (dU/dx dW/dp + dW/dp dU/dx)/2.
      const Complex* gi = &dudx[i * d * d];
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
          const std::size_t pair = a * d + b;
          const Complex dwdx = (value(pair, ii + 1, jj) - value(pair, ii - 1, jj)) * inv2dx;
          Complex commutator{};
          Complex force_term{};
          for (std::size_t c = 0; c < d; ++c) {
            commutator += ui[a * d + c] * wn[c * d + b] - wn[a * d + c] * ui[c * d + b];
            force_term += gi[a * d + c] * dwdp[c * d + b] + dwdp[a * d + c] * gi[c * d + b];
          }
          out[pair * n + j * nx + i] =
              -(p / mass) * dwdx + inv_ihbar * commutator + 0.5 * force_term;
        }
      }
    }
  }
}

}  // namespace

WignerMatrix general_rhs(const WignerMatrix& w, const PotentialModel& model, double t,
                         double mass) {
  if (model.dim() != w.dim()) throw IndexOutOfRange("model and state dimensions differ");
  WignerMatrix out(w.grid(), w.dim(), w.labels(), t);
  rhs_into(w.values(), out.values(), w.grid(), w.dim(), tabulate(model, w.grid(), t, 0),
           tabulate(model, w.grid(), t, 1), mass);
  return out;
}

WignerMatrix step_general(const WignerMatrix& w, const PotentialModel& model, double dt,
                          double mass) {
  if (model.dim() != w.dim()) throw IndexOutOfRange("model and state dimensions differ");
  if (!(mass > 0.0)) throw InvalidStepPlan("mass must be positive");
  const auto& g = w.grid();
  const std::size_t d = w.dim();
  const std::size_t total = w.values().size();
  const double t = w.time();

  std::vector<Complex> k1(total), k2(total), k3(total), k4(total), tmp(total);
  const auto src = w.values();

  auto stage = [&](double ts, std::span<const Complex> state, std::vector<Complex>& k) {
    rhs_into(state, k, g, d, tabulate(model, g, ts, 0), tabulate(model, g, ts, 1), mass);
  };
  auto axpy = [&](double h, const std::vector<Complex>& k) {
    for (std::size_t n = 0; n < total; ++n) tmp[n] = src[n] + h * k[n];
  };

  stage(t, src, k1);
  axpy(0.5 * dt, k1);
  stage(t + 0.5 * dt, tmp, k2);
  axpy(0.5 * dt, k2);
  stage(t + 0.5 * dt, tmp, k3);
  axpy(dt, k3);
  stage(t + dt, tmp, k4);

  WignerMatrix out(g, d, w.labels(), t + dt);
  auto dst = out.values();
  for (std::size_t n = 0; n < total; ++n)
    dst[n] = src[n] + dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
  return out;
}

WignerMatrix closed_form_sg(const PhaseSpaceGrid& grid, const BeamSpec& beam,
                            const SpinMatrix& spin_density, const UniaxialGradientField& field,
                            double t) {
  beam.validate();
  validate_spin_density(spin_density);
  if (spin_density.rows() != 2) throw IndexOutOfRange("closed form requires a spin-1/2 state");
  const ZeemanGradientPotential model(field, beam.gyromagnetic_ratio);
  const double m = beam.mass;
  // U_eta(x) = offset_eta + slope_eta x
  const SpinMatrix u0 = model.evaluate(0.0, 0.0);
  const SpinMatrix u1 = model.derivative(0.0, 0.0, 1);
  const double offset[2] = {u0(0, 0).real(), u0(1, 1).real()};
  const double slope[2] = {u1(0, 0).real(), u1(1, 1).real()};

  WignerMatrix w(grid, 2, {}, t);
  for (std::size_t eta = 0; eta < 2; ++eta) {
    for (std::size_t xi = 0; xi < 2; ++xi) {
      Complex rho = eta <= xi ? spin_density(static_cast<Eigen::Index>(eta),
                                             static_cast<Eigen::Index>(xi))
                              : std::conj(spin_density(static_cast<Eigen::Index>(xi),
                                                       static_cast<Eigen::Index>(eta)));
      if (eta == xi) rho = rho.real();
      const double mean_force = -0.5 * (slope[eta] + slope[xi]);
      const double d_offset = offset[eta] - offset[xi];
      const double d_slope = slope[eta] - slope[xi];
      auto dst = w.element(eta, xi);
      for (std::size_t j = 0; j < grid.n_p(); ++j) {
        const double p = grid.p(j);
        const double p0 = p - mean_force * t;
        for (std::size_t i = 0; i < grid.n_x(); ++i) {
          const double x = grid.x(i);
          const double x0 = x - p * t / m + mean_force * t * t / (2.0 * m);
          // integral of x(tau) along the characteristic from 0 to t
          const double x_integral =
              x0 * t + p0 * t * t / (2.0 * m) + mean_force * t * t * t / (6.0 * m);
          const double phase = -(d_offset * t + d_slope * x_integral) / hbar;
          Complex value = rho * gaussian_profile(beam, x0, p0);
          if (eta != xi) value *= std::polar(1.0, phase);
          dst[grid.index(i, j)] = value;
        }
      }
    }
  }
  return w;
}

WignerMatrix propagate(WignerMatrix w, const PotentialModel& model, const StepPlan& plan,
                       double duration, const SnapshotHook& hook) {
  plan.validate();
  if (!(duration >= 0.0) || !std::isfinite(duration))
    throw InvalidStepPlan("duration must be non-negative");
  if (model.dim() != w.dim()) throw IndexOutOfRange("model and state dimensions differ");
  if (duration == 0.0) {
    if (hook) hook(0, w);
    return w;
  }

  if (plan.scheme == Scheme::closed_form_sg) {
    const auto degree = model.polynomial_degree();
    if (!model.diagonal() || !degree || *degree > 1)
      throw InvalidStepPlan("closed_form_sg requires a linear diagonal model, got " +
                            model.name());
    w = split_step(w, model, duration, plan.mass, 1, plan.boundary);
    if (hook) hook(1, w);
    return w;
  }

  if (plan.scheme == Scheme::split_first_order && !model.commuting())
    throw NonCommutingModel("split_first_order requires a commuting model; use rk4_general");

  if (plan.stability_policy != CheckPolicy::ignore) {
    std::ostringstream msg;
    const double limit = advective_time_limit(w.grid(), plan.mass);
    if (plan.dt > limit) msg << "dt " << plan.dt << " exceeds advective bound " << limit << ". ";
    if (plan.scheme == Scheme::rk4_general) {
      const double omega = max_splitting_frequency(model, w.grid(), w.time());
      // RK4 is stable on the imaginary axis up to |lambda dt| = 2 sqrt(2).
      if (omega * plan.dt > 2.0 * std::sqrt(2.0))
        msg << "omega_max dt = " << omega * plan.dt << " exceeds the RK4 stability limit. ";
    }
    if (!msg.str().empty()) {
      if (plan.stability_policy == CheckPolicy::error) throw StabilityViolation(msg.str());
      emit_warning(plan.on_warning, msg.str());
    }
  }

  const double ratio = duration / plan.dt;
  auto steps = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
  if (steps == 0) steps = 1;
  const double t_end = w.time() + duration;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double h = k == steps ? t_end - w.time() : plan.dt;
    if (plan.scheme == Scheme::split_first_order) {
      BoundaryGuard inner = plan.boundary;
      inner.policy = CheckPolicy::ignore;
      w = split_step(w, model, h, plan.mass, plan.truncation_order, inner);
    } else {
      w = step_general(w, model, h, plan.mass);
    }
    if (k == steps) w.set_time(t_end);
    apply_guard(w, plan.boundary, "propagate", plan.truncation_order, plan.on_warning);
    const bool due = plan.snapshot_every > 0 && k % plan.snapshot_every == 0;
    if (hook && (due || k == steps)) hook(k, w);
  }
  return w;
}

}  // namespace ewf
