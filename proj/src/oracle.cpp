#include "ewf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fftw3.h>
#include <Eigen/Eigenvalues>

#include "ewf/constants.hpp"
#include "ewf/errors.hpp"

namespace ewf::oracle {

namespace {

using constants::hbar;
using constants::pi;

// Owns an in-place complex FFT pair for one line length.
class FftPair {
 public:
  explicit FftPair(std::size_t n) : n_(n) {
    buffer_ = fftw_alloc_complex(n);
    auto* data = buffer_;
    forward_ = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftPair() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
  }
  FftPair(const FftPair&) = delete;
  FftPair& operator=(const FftPair&) = delete;

  Complex* data() { return reinterpret_cast<Complex*>(buffer_); }
  void forward() { fftw_execute(forward_); }
  // Unnormalized; callers divide by n.
  void backward() { fftw_execute(backward_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  fftw_complex* buffer_;
  fftw_plan forward_;
  fftw_plan backward_;
};

// Angular wavenumber of FFT bin q on a periodic line.
double wavenumber(std::size_t q, const SpinorLine& line) {
  const auto n = static_cast<long>(line.n);
  long s = static_cast<long>(q);
  if (s > n / 2) s -= n;
  return 2.0 * pi * static_cast<double>(s) / (static_cast<double>(line.n) * line.dx);
}

SpinMatrix propagator_matrix(const SpinMatrix& u, double tau) {
  Eigen::SelfAdjointEigenSolver<SpinMatrix> solver(u);
  const auto& ev = solver.eigenvalues();
  Eigen::VectorXcd phases(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k) phases(k) = std::polar(1.0, -ev(k) * tau / hbar);
  return solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
}

void apply_potential(SpinorWavefunction& psi, const PotentialModel& model, double t,
                     double tau) {
  const std::size_t d = psi.dim();
  Eigen::VectorXcd node(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < psi.line.n; ++i) {
    const SpinMatrix u = model.evaluate(psi.line.x(i), t);
    const SpinMatrix prop = propagator_matrix(u, tau);
    for (std::size_t e = 0; e < d; ++e) node(static_cast<Eigen::Index>(e)) = psi.components[e][i];
    const Eigen::VectorXcd out = prop * node;
    for (std::size_t e = 0; e < d; ++e) psi.components[e][i] = out(static_cast<Eigen::Index>(e));
  }
}

}  // namespace

double SpinorWavefunction::norm() const {
  double acc = 0.0;
  for (const auto& c : components)
    for (const auto& v : c) acc += std::norm(v);
  return acc * line.dx;
}

SpinorLine aligned_line(const PhaseSpaceGrid& target, std::size_t refine, double padding) {
  if (refine == 0) throw InvalidGrid("line refinement must be positive");
  if (!(padding >= 1.0)) throw InvalidGrid("line padding must be at least 1");
  const std::size_t cells = (target.n_x() - 1) * refine;
  const auto margin = static_cast<std::size_t>(
      std::ceil(0.5 * (padding - 1.0) * static_cast<double>(cells)));
  SpinorLine line;
  line.dx = target.dx() / static_cast<double>(refine);
  line.x_min = target.x_min() - static_cast<double>(margin) * line.dx;
  line.n = cells + 2 * margin + 1;
  return line;
}

std::size_t required_refinement(const PhaseSpaceGrid& target) {
  const double p_max = std::max(std::abs(target.p_min()), std::abs(target.p_max()));
  // |p| <= pi hbar / (2 h) with h = dx / r, doubled for margin.
  const double r = 4.0 * p_max * target.dx() / (pi * hbar);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r)));
}

SpinorWavefunction gaussian_spinor(const SpinorLine& line, double sigma,
                                   const Eigen::VectorXcd& spin, PhaseSpacePoint centre) {
  if (!(sigma > 0.0)) throw InvalidBeam("packet width must be positive");
  if (spin.size() == 0 || spin.norm() == 0.0) throw InvalidBeam("spin vector must be nonzero");
  const Eigen::VectorXcd c = spin / spin.norm();
  SpinorWavefunction psi;
  psi.line = line;
  psi.components.assign(static_cast<std::size_t>(c.size()), std::vector<Complex>(line.n));
  const double amplitude = std::pow(2.0 * pi * sigma * sigma, -0.25);
  for (std::size_t i = 0; i < line.n; ++i) {
    const double dx = line.x(i) - centre.x;
    const Complex envelope =
        amplitude * std::exp(-dx * dx / (4.0 * sigma * sigma)) *
        std::polar(1.0, centre.p * dx / hbar);
    for (std::size_t e = 0; e < psi.components.size(); ++e)
      psi.components[e][i] = c(static_cast<Eigen::Index>(e)) * envelope;
  }
  return psi;
}

void check_band_limit(const SpinorWavefunction& psi) {
  FftPair fft(psi.line.n);
  const double k_half = 0.5 * pi / psi.line.dx;
  for (std::size_t e = 0; e < psi.dim(); ++e) {
    std::copy(psi.components[e].begin(), psi.components[e].end(), fft.data());
    fft.forward();
    double peak = 0.0;
    double high = 0.0;
    for (std::size_t q = 0; q < psi.line.n; ++q) {
      const double a = std::abs(fft.data()[q]);
      peak = std::max(peak, a);
      if (std::abs(wavenumber(q, psi.line)) >= k_half) high = std::max(high, a);
    }
    if (peak > 0.0 && high > 1e-6 * peak) {
      std::ostringstream msg;
      msg << "component " << e << " has relative spectral weight " << high / peak
          << " in the upper half of the band";
      throw BandLimitViolation(msg.str());
    }
  }
}

void check_support(const SpinorWavefunction& psi) {
  const std::size_t edge = psi.line.n / 8;
  for (std::size_t e = 0; e < psi.dim(); ++e) {
    const auto& c = psi.components[e];
    double peak = 0.0;
    double outer = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double a = std::abs(c[i]);
      peak = std::max(peak, a);
      if (i < edge || i + edge >= c.size()) outer = std::max(outer, a);
    }
    if (peak > 0.0 && outer > 1e-6 * peak) {
      std::ostringstream msg;
      msg << "component " << e << " reaches " << outer / peak
          << " of its peak within the outer eighth of the line";
      throw SupportOverflow(msg.str());
    }
  }
}

SpinorWavefunction schrodinger_split_step(const SpinorWavefunction& psi,
                                          const PotentialModel& model, double mass, double dt,
                                          std::size_t steps, double t0) {
  if (model.dim() != psi.dim()) throw IndexOutOfRange("model and spinor dimensions differ");
  if (!(mass > 0.0)) throw InvalidStepPlan("mass must be positive");
  check_band_limit(psi);

  SpinorWavefunction out = psi;
  const std::size_t n = psi.line.n;
  FftPair fft(n);
  std::vector<Complex> kinetic(n);
  for (std::size_t q = 0; q < n; ++q) {
    const double k = wavenumber(q, psi.line);
    kinetic[q] = std::polar(1.0 / static_cast<double>(n), -hbar * k * k * dt / (2.0 * mass));
  }

  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    apply_potential(out, model, t + 0.25 * dt, 0.5 * dt);
    for (auto& c : out.components) {
      std::copy(c.begin(), c.end(), fft.data());
      fft.forward();
      for (std::size_t q = 0; q < n; ++q) fft.data()[q] *= kinetic[q];
      fft.backward();
      std::copy(fft.data(), fft.data() + n, c.begin());
    }
    apply_potential(out, model, t + 0.75 * dt, 0.5 * dt);
  }
  return out;
}

WignerMatrix wigner_transform(const SpinorWavefunction& psi, const PhaseSpaceGrid& target) {
  const auto& line = psi.line;
  const std::size_t d = psi.dim();
  if (d == 0) throw IndexOutOfRange("spinor has no components");

  const double ratio = target.dx() / line.dx;
  const auto refine = static_cast<std::size_t>(std::llround(ratio));
  const double offset = (target.x_min() - line.x_min) / line.dx;
  const auto first = std::llround(offset);
  if (refine == 0 || std::abs(ratio - static_cast<double>(refine)) > 1e-6 ||
      std::abs(offset - static_cast<double>(first)) > 1e-6 || first < 0 ||
      static_cast<std::size_t>(first) + (target.n_x() - 1) * refine >= line.n)
    throw InvalidGrid("target x nodes must coincide with spinor line nodes");

  const double p_limit = pi * hbar / (2.0 * line.dx);
  if (std::max(std::abs(target.p_min()), std::abs(target.p_max())) > p_limit * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "target momentum range exceeds the Weyl quadrature limit " << p_limit;
    throw BandLimitViolation(msg.str());
  }

  const double ds = 2.0 * line.dx;
  const double scale = ds / constants::planck;
  const std::size_t k_max = line.n / 2;

  // phase[j * (k_max + 1) + k] = exp(-i p_j s_k / hbar)
  std::vector<Complex> phase(target.n_p() * (k_max + 1));
  for (std::size_t j = 0; j < target.n_p(); ++j)
    for (std::size_t k = 0; k <= k_max; ++k)
      phase[j * (k_max + 1) + k] =
          std::polar(1.0, -target.p(j) * ds * static_cast<double>(k) / hbar);

  double peak = 0.0;
  for (const auto& c : psi.components)
    for (const auto& v : c) peak = std::max(peak, std::abs(v));
  const double negligible = 1e-17 * peak * peak;

  WignerMatrix w(target, d);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < target.n_x(); ++i) {
    const std::size_t c = static_cast<std::size_t>(first) + i * refine;
    const std::size_t reach = std::min(c, line.n - 1 - c);
    std::vector<Complex> plus(reach + 1), minus(reach + 1);
    for (std::size_t eta = 0; eta < d; ++eta) {
      for (std::size_t xi = 0; xi < d; ++xi) {
        const auto& a = psi.components[eta];
        const auto& b = psi.components[xi];
        // f(+k) = a(c+k) conj b(c-k), f(-k) = a(c-k) conj b(c+k)
        std::size_t last = 0;
        for (std::size_t k = 0; k <= reach; ++k) {
          plus[k] = a[c + k] * std::conj(b[c - k]);
          minus[k] = a[c - k] * std::conj(b[c + k]);
          if (std::abs(plus[k]) > negligible || std::abs(minus[k]) > negligible) last = k;
        }
        // Trapezoid end weights apply only when the sum is cut by the line end.
        const double end_weight = last == reach ? 0.5 : 1.0;
        for (std::size_t j = 0; j < target.n_p(); ++j) {
          const Complex* ph = &phase[j * (k_max + 1)];
          Complex acc = plus[0];
          for (std::size_t k = 1; k <= last; ++k) {
            const double wk = k == reach ? end_weight : 1.0;
            acc += wk * (plus[k] * ph[k] + minus[k] * std::conj(ph[k]));
          }
          w(eta, xi, i, j) = scale * acc;
        }
      }
    }
  }
  return w;
}

SpinMatrix two_level_ode(const SpinMatrix& rho, const SpinMatrix& potential, double t) {
  if (rho.rows() != potential.rows() || rho.cols() != potential.cols())
    throw IndexOutOfRange("density and potential dimensions differ");
  const SpinMatrix u = propagator_matrix(potential, t);
  return u * rho * u.adjoint();
}

double linf_difference(const WignerMatrix& a, const WignerMatrix& b) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim())
    throw IndexOutOfRange("compared states differ in grid or dimension");
  const auto va = a.values();
  const auto vb = b.values();
  double m = 0.0;
  for (std::size_t n = 0; n < va.size(); ++n) m = std::max(m, std::abs(va[n] - vb[n]));
  return m;
}

}  // namespace ewf::oracle
