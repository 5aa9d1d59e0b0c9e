#include "ewf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "ewf/errors.hpp"
#include "ewf/oracle.hpp"

namespace ewf {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double segment_length(const Segment& s) {
  return std::visit(Overloaded{[](const GradientMagnet& m) { return m.length; },
                               [](const FreeFlight& f) { return f.length; },
                               [](const RfRegion& r) { return r.length; },
                               [](const auto&) { return 0.0; }},
                    s);
}

bool propagates(const Segment& s) {
  return std::holds_alternative<GradientMagnet>(s) || std::holds_alternative<FreeFlight>(s) ||
         std::holds_alternative<RfRegion>(s);
}

std::unique_ptr<PotentialModel> model_for(const Segment& s, const BeamSpec& beam,
                                          std::size_t dim) {
  if (const auto* m = std::get_if<GradientMagnet>(&s))
    return std::make_unique<ZeemanGradientPotential>(zeeman_gradient_potential(m->field, beam));
  if (const auto* r = std::get_if<RfRegion>(&s))
    return std::make_unique<RfRegionPotential>(
        rf_region_potential(r->b1, beam, r->field_offset, r->omega_rf));
  return std::make_unique<FreeSpacePotential>(dim);
}

bool exact_in_one_step(const PotentialModel& model) {
  const auto degree = model.polynomial_degree();
  return model.commuting() && degree && *degree <= 1;
}

double relative_trace_drift(double now, double entry) {
  return entry != 0.0 ? std::abs(now - entry) / std::abs(entry) : std::abs(now);
}

// Mutable state threaded through the segments of one pipeline run.
struct PipelineCursor {
  WignerMatrix state;
  double z = 0.0;
  std::size_t sample_index = 0;
};

class PipelineRunner {
 public:
  PipelineRunner(const ExperimentPlan& plan, PipelineResult& out, const SampleHook& on_sample,
                 const SampleHook& on_snapshot)
      : plan_(plan), out_(out), on_sample_(on_sample), on_snapshot_(on_snapshot) {}

  void record(const PipelineCursor& c, std::size_t segment) {
    out_.trace.samples.push_back(sample_marginals(c.state, c.z));
    out_.sample_segment.push_back(segment);
    if (on_sample_) on_sample_(c.sample_index, c.z, c.state);
    if (on_snapshot_ && plan_.snapshot_every > 0 && c.sample_index % plan_.snapshot_every == 0)
      on_snapshot_(c.sample_index, c.z, c.state);
  }

  void run(PipelineCursor& c, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Segment& seg = plan_.segments[k];
      if (const auto* slit = std::get_if<Slit>(&seg)) {
        auto cut = apply_slit(c.state, slit->width, slit->center);
        out_.slit_transmission.push_back(cut.transmitted_fraction);
        c.state = std::move(cut.state);
      } else if (const auto* det = std::get_if<Detector>(&seg)) {
        out_.detector_intensity = detector_intensity(c.state, *det);
      } else {
        propagate_segment(c, seg, k);
      }
    }
  }

 private:
  static double detector_intensity(const WignerMatrix& w, const Detector& det) {
    const auto& g = w.grid();
    std::vector<double> density(g.n_x(), 0.0);
    for (std::size_t eta = 0; eta < w.dim(); ++eta) {
      const auto m = marginal_position(w, eta, eta);
      for (std::size_t i = 0; i < g.n_x(); ++i) density[i] += m[i].real();
    }
    // Trapezoid over the contiguous run of nodes inside the aperture.
    double acc = 0.0;
    std::size_t first = g.n_x();
    std::size_t last = 0;
    for (std::size_t i = 0; i < g.n_x(); ++i) {
      if (std::abs(g.x(i) - det.center) < 0.5 * det.aperture) {
        first = std::min(first, i);
        last = i;
        acc += density[i];
      }
    }
    if (first > last) return 0.0;
    acc -= 0.5 * (density[first] + density[last]);
    return acc * g.dx();
  }

  void propagate_segment(PipelineCursor& c, const Segment& seg, std::size_t index) {
    const auto model = model_for(seg, plan_.beam, c.state.dim());
    const double length = segment_length(seg);
    const double duration = length / plan_.beam.velocity;
    const std::size_t n = plan_.samples_per_segment;
    const StepPlan& step = plan_.step;

    const bool closed = step.scheme == Scheme::closed_form_sg;
    if (closed && !(model->diagonal() && exact_in_one_step(*model)))
      throw InvalidPlan("closed_form_sg cannot propagate segment " + segment_name(seg));
    const bool single = closed || (step.scheme == Scheme::split_first_order && step.dt == 0.0 &&
                                   exact_in_one_step(*model));

    const WignerMatrix entry = c.state;
    const double entry_trace = trace_norm(entry);
    const double z0 = c.z;
    double t_prev = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double t_k = duration * static_cast<double>(k) / static_cast<double>(n);
      if (single) {
        c.state = split_step(entry, *model, t_k, plan_.beam.mass, 1, step.boundary);
      } else {
        StepPlan sp = step;
        sp.mass = plan_.beam.mass;
        if (sp.dt == 0.0)
          sp.dt = default_time_step(c.state.grid(), sp.mass, *model, c.state.time());
        c.state = propagate(std::move(c.state), *model, sp, t_k - t_prev);
      }
      c.state.set_time(entry.time() + t_k);
      t_prev = t_k;
      c.z = z0 + length * static_cast<double>(k) / static_cast<double>(n);
      ++c.sample_index;

      auto& inv = out_.invariants;
      const double peak = c.state.max_abs();
      if (peak > 0.0)
        inv.max_hermiticity_ratio =
            std::max(inv.max_hermiticity_ratio, hermiticity_defect(c.state) / peak);
      inv.max_trace_drift =
          std::max(inv.max_trace_drift, relative_trace_drift(trace_norm(c.state), entry_trace));
      inv.max_boundary_fraction = std::max(inv.max_boundary_fraction,
                                           boundary_fraction(c.state, step.boundary.band));
      record(c, index);
    }
  }

  const ExperimentPlan& plan_;
  PipelineResult& out_;
  const SampleHook& on_sample_;
  const SampleHook& on_snapshot_;
};

PipelineResult empty_result(const ExperimentPlan& plan, const WignerMatrix& initial) {
  PipelineResult out{initial, {}, {}, {}, {}, {}};
  out.trace.grid = plan.grid;
  out.trace.dim = initial.dim();
  out.trace.labels = initial.labels();
  return out;
}

WignerMatrix initial_state(const ExperimentPlan& plan) {
  return build_gaussian_state(plan.grid, plan.beam, plan.spin_density);
}

PipelineResult run_from(const ExperimentPlan& plan, PipelineCursor cursor, std::size_t begin,
                        const SampleHook& on_sample = {}, const SampleHook& on_snapshot = {}) {
  PipelineResult out = empty_result(plan, cursor.state);
  PipelineRunner runner(plan, out, on_sample, on_snapshot);
  runner.run(cursor, begin, plan.segments.size());
  out.final_state = std::move(cursor.state);
  if (out.detector_intensity) out.trace.scalars.emplace_back("detector_intensity",
                                                              *out.detector_intensity);
  return out;
}

std::size_t count_magnets(const ExperimentPlan& plan) {
  return static_cast<std::size_t>(std::count_if(
      plan.segments.begin(), plan.segments.end(),
      [](const Segment& s) { return std::holds_alternative<GradientMagnet>(s); }));
}

// Predicted W_ab wavenumbers at the end of each magnet or free-flight segment:
// a gradient adds gamma G per unit time to k_x and shear converts k_x into
// k_p at rate -k_x / m.
struct WavenumberTrack {
  double k_x = 0.0;
  double k_p = 0.0;

  void advance(double gamma_gradient, double tau, double mass) {
    k_p -= (k_x * tau + 0.5 * gamma_gradient * tau * tau) / mass;
    k_x += gamma_gradient * tau;
  }
  bool resolved(const PhaseSpaceGrid& g) const {
    return std::abs(k_x) * g.dx() <= kResolutionLimit &&
           std::abs(k_p) * g.dp() <= kResolutionLimit;
  }
};

bool modulation_resolved(const ExperimentPlan& plan) {
  WavenumberTrack track;
  for (const auto& s : plan.segments) {
    if (!propagates(s)) continue;
    const double tau = segment_length(s) / plan.beam.velocity;
    double gg = 0.0;
    if (const auto* m = std::get_if<GradientMagnet>(&s))
      gg = plan.beam.gyromagnetic_ratio * m->field.effective_gradient();
    // The peak |k| inside a segment is reached at one of its ends.
    track.advance(gg, tau, plan.beam.mass);
    if (!track.resolved(plan.grid)) return false;
  }
  return true;
}

void require_coherent_segments(const ExperimentPlan& plan) {
  for (const auto& s : plan.segments)
    if (!std::holds_alternative<GradientMagnet>(s) && !std::holds_alternative<FreeFlight>(s))
      throw InvalidPlan("coherent runs accept only gradient magnets and free flights, got " +
                        segment_name(s));
  if (plan.spin_density.rows() != 2 || std::abs(plan.spin_density(0, 1)) == 0.0)
    throw InvalidPlan("coherent runs need a spin state with alpha-beta coherence");
}

}  // namespace

std::string segment_name(const Segment& segment) {
  return std::visit(Overloaded{[](const GradientMagnet&) { return std::string("gradient_magnet"); },
                               [](const FreeFlight&) { return std::string("free_flight"); },
                               [](const Slit&) { return std::string("slit"); },
                               [](const RfRegion&) { return std::string("rf_region"); },
                               [](const Detector&) { return std::string("detector"); }},
                    segment);
}

void ExperimentPlan::validate() const {
  try {
    beam.validate();
    validate_spin_density(spin_density);
  } catch (const Error& e) {
    throw InvalidPlan(e.what());
  }
  if (!(step.dt >= 0.0) || !std::isfinite(step.dt))
    throw InvalidPlan("time step must be non-negative (0 selects the automatic policy)");
  if (step.truncation_order == 0) throw InvalidPlan("truncation order must be at least 1");
  if (segments.empty()) throw InvalidPlan("plan has no segments");
  if (samples_per_segment == 0) throw InvalidPlan("samples_per_segment must be positive");
  const auto dim = static_cast<std::size_t>(spin_density.rows());
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    const std::string where = "segment " + std::to_string(k) + " (" + segment_name(s) + ")";
    if (propagates(s)) {
      const double len = segment_length(s);
      if (!(len > 0.0) || !std::isfinite(len)) throw InvalidPlan(where + ": length must be positive");
    }
    if ((std::holds_alternative<GradientMagnet>(s) || std::holds_alternative<RfRegion>(s)) &&
        dim != 2)
      throw InvalidPlan(where + ": requires a spin-1/2 state");
    if (const auto* slit = std::get_if<Slit>(&s))
      if (!(slit->width > 0.0)) throw InvalidPlan(where + ": width must be positive");
    if (const auto* det = std::get_if<Detector>(&s))
      if (!(det->aperture > 0.0)) throw InvalidPlan(where + ": aperture must be positive");
  }
}

std::optional<double> BeamTrace::scalar(const std::string& name) const {
  for (const auto& [key, value] : scalars)
    if (key == name) return value;
  return std::nullopt;
}

TraceSample sample_marginals(const WignerMatrix& w, double z) {
  TraceSample s;
  s.z = z;
  s.time = w.time();
  for (std::size_t eta = 0; eta < w.dim(); ++eta) {
    for (std::size_t xi = 0; xi < w.dim(); ++xi) {
      s.position.push_back(marginal_position(w, eta, xi));
      s.momentum.push_back(marginal_momentum(w, eta, xi));
    }
  }
  return s;
}

PipelineResult run_pipeline(const ExperimentPlan& plan, const SampleHook& on_sample,
                            const SampleHook& on_snapshot) {
  plan.validate();
  PipelineCursor cursor{initial_state(plan), 0.0, 0};
  PipelineResult out = empty_result(plan, cursor.state);
  PipelineRunner runner(plan, out, on_sample, on_snapshot);
  runner.record(cursor, PipelineResult::kInitialSample);
  runner.run(cursor, 0, plan.segments.size());
  out.final_state = std::move(cursor.state);
  if (out.detector_intensity)
    out.trace.scalars.emplace_back("detector_intensity", *out.detector_intensity);
  return out;
}

SlitResult apply_slit(const WignerMatrix& w, double width, double center) {
  const auto& g = w.grid();
  if (!(width > 2.0 * g.dx())) {
    std::ostringstream msg;
    msg << "slit width " << width << " m does not exceed two grid spacings (" << 2.0 * g.dx()
        << " m)";
    throw SlitUnresolved(msg.str());
  }
  WignerMatrix out = w;
  for (std::size_t eta = 0; eta < w.dim(); ++eta)
    for (std::size_t xi = 0; xi < w.dim(); ++xi) {
      auto el = out.element(eta, xi);
      for (std::size_t j = 0; j < g.n_p(); ++j)
        for (std::size_t i = 0; i < g.n_x(); ++i)
          if (!(std::abs(g.x(i) - center) < 0.5 * width)) el[g.index(i, j)] = Complex{};
    }
  const double before = trace_norm(w);
  const double after = trace_norm(out);
  return {std::move(out), before != 0.0 ? after / before : 0.0};
}

double marginal_overlap(const std::vector<Complex>& f, const std::vector<Complex>& g) {
  if (f.size() != g.size()) throw IndexOutOfRange("marginals differ in length");
  double fg = 0.0, ff = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fg += f[i].real() * g[i].real();
    ff += f[i].real() * f[i].real();
    gg += g[i].real() * g[i].real();
  }
  return ff > 0.0 && gg > 0.0 ? fg / std::sqrt(ff * gg) : 0.0;
}

double peak_location(const std::vector<Complex>& f, double origin, double spacing) {
  if (f.empty()) throw IndexOutOfRange("empty marginal");
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f[i].real() > f[best].real()) best = i;
  double offset = 0.0;
  if (best > 0 && best + 1 < f.size()) {
    const double a = f[best - 1].real();
    const double b = f[best].real();
    const double c = f[best + 1].real();
    const double denom = a - 2.0 * b + c;
    if (denom != 0.0) offset = 0.5 * (a - c) / denom;
  }
  return origin + (static_cast<double>(best) + offset) * spacing;
}

OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y,
                             int power) {
  if (x.size() != y.size() || x.empty()) throw IndexOutOfRange("fit needs matching samples");
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double b = std::pow(x[i], power);
    sxy += b * y[i];
    sxx += b * b;
  }
  OriginFit fit;
  fit.coefficient = sxx > 0.0 ? sxy / sxx : 0.0;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.coefficient * std::pow(x[i], power);
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

SternGerlachResult run_stern_gerlach(const ExperimentPlan& plan, const SampleHook& on_snapshot) {
  if (count_magnets(plan) != 1)
    throw InvalidPlan("a Stern-Gerlach plan needs exactly one gradient magnet");
  if (plan.spin_density.rows() != 2) throw InvalidPlan("Stern-Gerlach runs need spin 1/2");

  SternGerlachResult r{run_pipeline(plan, {}, on_snapshot), {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const auto& g = plan.grid;
  std::size_t magnet = 0;
  double magnet_start = 0.0;
  for (std::size_t k = 0; k < plan.segments.size(); ++k) {
    if (std::holds_alternative<GradientMagnet>(plan.segments[k])) {
      magnet = k;
      break;
    }
    magnet_start += segment_length(plan.segments[k]);
  }

  std::vector<double> fit_z, fit_x, fit_p;
  const auto& samples = r.run.trace.samples;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    const double xa = peak_location(smp.position[0], g.x_min(), g.dx());
    const double xb = peak_location(smp.position[3], g.x_min(), g.dx());
    const double pa = peak_location(smp.momentum[0], g.p_min(), g.dp());
    const double pb = peak_location(smp.momentum[3], g.p_min(), g.dp());
    r.z.push_back(smp.z);
    r.position_separation.push_back(xa - xb);
    r.momentum_separation.push_back(pa - pb);
    r.position_overlap.push_back(marginal_overlap(smp.position[0], smp.position[3]));
    r.momentum_overlap.push_back(marginal_overlap(smp.momentum[0], smp.momentum[3]));
    const std::size_t seg = r.run.sample_segment[s];
    if (seg == magnet || (seg == PipelineResult::kInitialSample && magnet_start == 0.0)) {
      fit_z.push_back(smp.z - magnet_start);
      fit_x.push_back(xa - xb);
      fit_p.push_back(pa - pb);
    }
  }

  auto first_crossing = [&](const std::vector<double>& overlap) -> std::optional<double> {
    for (std::size_t s = 1; s < overlap.size(); ++s) {
      if (overlap[s] < kSplitOverlapThreshold && overlap[s - 1] >= kSplitOverlapThreshold) {
        const double f = (overlap[s - 1] - kSplitOverlapThreshold) / (overlap[s - 1] - overlap[s]);
        return r.z[s - 1] + f * (r.z[s] - r.z[s - 1]);
      }
      if (overlap[s] < kSplitOverlapThreshold) return r.z[s];
    }
    return std::nullopt;
  };
  r.z_momentum_split = first_crossing(r.momentum_overlap);
  r.z_position_split = first_crossing(r.position_overlap);
  r.position_fit = fit_through_origin(fit_z, fit_x, 2);
  r.momentum_fit = fit_through_origin(fit_z, fit_p, 1);

  auto& sc = r.run.trace.scalars;
  if (r.z_momentum_split) sc.emplace_back("z_momentum_split_m", *r.z_momentum_split);
  if (r.z_position_split) sc.emplace_back("z_position_split_m", *r.z_position_split);
  sc.emplace_back("final_position_separation_m", r.position_separation.back());
  sc.emplace_back("final_momentum_separation_kg_m_per_s", r.momentum_separation.back());
  sc.emplace_back("position_fit_r_squared", r.position_fit.r_squared);
  sc.emplace_back("momentum_fit_r_squared", r.momentum_fit.r_squared);
  return r;
}

std::pair<double, double> modulation_wavenumber(const WignerMatrix& w, std::size_t eta,
                                                std::size_t xi) {
  const auto& g = w.grid();
  const auto el = w.element(eta, xi);
  Complex along_x{}, along_p{};
  for (std::size_t j = 0; j < g.n_p(); ++j)
    for (std::size_t i = 0; i + 1 < g.n_x(); ++i)
      along_x += std::conj(el[g.index(i, j)]) * el[g.index(i + 1, j)];
  for (std::size_t j = 0; j + 1 < g.n_p(); ++j)
    for (std::size_t i = 0; i < g.n_x(); ++i)
      along_p += std::conj(el[g.index(i, j)]) * el[g.index(i, j + 1)];
  return {std::arg(along_x) / g.dx(), std::arg(along_p) / g.dp()};
}

double predicted_spatial_frequency(double gyromagnetic_ratio, double gradient, double t) {
  return std::abs(gyromagnetic_ratio * gradient * t) / (2.0 * constants::pi);
}

CoherentResult run_sg_coherent(const ExperimentPlan& plan, double gradient_scale,
                               const SampleHook& on_snapshot) {
  require_coherent_segments(plan);
  if (!(gradient_scale > 0.0) || !std::isfinite(gradient_scale))
    throw InvalidPlan("gradient scale must be positive");
  ExperimentPlan scaled = plan;
  double g_eff = 0.0;
  for (auto& s : scaled.segments)
    if (auto* m = std::get_if<GradientMagnet>(&s)) {
      m->field.gradient *= gradient_scale;
      g_eff = m->field.effective_gradient();
    }

  std::vector<CoherentSample> samples;

  // Per-sample predicted wavenumbers decide resolution; the measured ones
  // alias silently once the modulation outruns the grid.
  std::vector<WavenumberTrack> predicted;
  {
    WavenumberTrack track;
    predicted.push_back(track);
    for (const auto& s : scaled.segments) {
      if (!propagates(s)) continue;
      const double tau = segment_length(s) / scaled.beam.velocity;
      double gg = 0.0;
      if (const auto* m = std::get_if<GradientMagnet>(&s))
        gg = scaled.beam.gyromagnetic_ratio * m->field.effective_gradient();
      for (std::size_t k = 1; k <= scaled.samples_per_segment; ++k) {
        WavenumberTrack at = track;
        at.advance(gg, tau * static_cast<double>(k) / static_cast<double>(scaled.samples_per_segment),
                   scaled.beam.mass);
        predicted.push_back(at);
      }
      track.advance(gg, tau, scaled.beam.mass);
    }
  }

  auto analyse = [&](std::size_t index, double, const WignerMatrix& w) {
    CoherentSample s;
    s.time = w.time();
    const auto [kx, kp] = modulation_wavenumber(w, 0, 1);
    s.k_x = kx;
    s.k_p = kp;
    s.coherence = std::abs(integrate(w, 0, 1));
    for (const auto& v : marginal_position(w, 0, 1))
      s.max_position_marginal = std::max(s.max_position_marginal, std::abs(v));
    s.resolved = index < predicted.size() ? predicted[index].resolved(w.grid()) : true;
    samples.push_back(s);
  };
  CoherentResult r{run_pipeline(scaled, analyse, on_snapshot), gradient_scale, g_eff, std::move(samples), 0.0,
                   plan.beam.gyromagnetic_ratio * g_eff, false};

  std::vector<double> t, k;
  for (std::size_t s = 0; s < r.samples.size(); ++s) {
    const std::size_t seg = r.run.sample_segment[s];
    const bool in_magnet = seg == PipelineResult::kInitialSample ||
                           std::holds_alternative<GradientMagnet>(scaled.segments[seg]);
    if (!r.samples[s].resolved) r.under_resolved = true;
    if (in_magnet && r.samples[s].resolved) {
      t.push_back(r.samples[s].time);
      k.push_back(r.samples[s].k_x);
    }
  }
  r.measured_slope = t.size() >= 2 ? fit_through_origin(t, k, 1).coefficient : 0.0;

  auto& sc = r.run.trace.scalars;
  sc.emplace_back("gradient_scale", gradient_scale);
  sc.emplace_back("effective_gradient_T_per_m", g_eff);
  sc.emplace_back("measured_k_slope_rad_per_m_s", r.measured_slope);
  sc.emplace_back("predicted_k_slope_rad_per_m_s", r.predicted_slope);
  sc.emplace_back("under_resolved", r.under_resolved ? 1.0 : 0.0);
  return r;
}

RabiResult run_rabi(const ExperimentPlan& plan, std::optional<double> field_offset,
                    const SampleHook& on_snapshot) {
  ExperimentPlan p = plan;
  bool has_rf = false, has_detector = false;
  for (auto& s : p.segments) {
    if (auto* rf = std::get_if<RfRegion>(&s)) {
      has_rf = true;
      if (field_offset) rf->field_offset = *field_offset;
    }
    if (std::holds_alternative<Detector>(s)) has_detector = true;
  }
  if (!has_rf || !has_detector)
    throw InvalidPlan("a Rabi plan needs an rf region and a detector");
  RabiResult r{run_pipeline(p, {}, on_snapshot), 0.0, 1.0};
  r.detector_intensity = r.run.detector_intensity.value_or(0.0);
  for (double f : r.run.slit_transmission) r.slit_transmission *= f;
  r.run.trace.scalars.emplace_back("slit_transmission", r.slit_transmission);
  return r;
}

SpectrumResult spectrum_scan(const ExperimentPlan& plan, const std::vector<double>& field_offsets,
                             const std::vector<double>& velocities,
                             const std::vector<double>& weights) {
  if (velocities.empty()) throw InvalidPlan("spectrum scan needs at least one velocity");
  if (weights.size() != velocities.size())
    throw InvalidPlan("one weight per velocity is required");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) throw InvalidPlan("velocity weights must sum to 1");
  if (field_offsets.empty()) throw InvalidPlan("spectrum scan needs at least one B_y0 value");
  for (std::size_t k = 1; k < field_offsets.size(); ++k)
    if (!(field_offsets[k] > field_offsets[k - 1]))
      throw InvalidPlan("B_y0 values must increase strictly");

  std::size_t rf_index = plan.segments.size();
  for (std::size_t k = 0; k < plan.segments.size(); ++k)
    if (std::holds_alternative<RfRegion>(plan.segments[k])) {
      rf_index = k;
      break;
    }
  if (rf_index == plan.segments.size()) throw InvalidPlan("a Rabi plan needs an rf region");

  const std::size_t nv = velocities.size();
  const std::size_t nb = field_offsets.size();

  // Segments before the first rf region do not depend on B_y0: run them once per velocity.
  std::vector<ExperimentPlan> plans(nv, plan);
  std::vector<PipelineCursor> prefix;
  for (std::size_t v = 0; v < nv; ++v) {
    plans[v].beam.velocity = velocities[v];
    plans[v].samples_per_segment = 1;
    plans[v].snapshot_every = 0;
    plans[v].validate();
    PipelineCursor c{initial_state(plans[v]), 0.0, 0};
    PipelineResult scratch = empty_result(plans[v], c.state);
    SampleHook none;
    PipelineRunner runner(plans[v], scratch, none, none);
    runner.run(c, 0, rf_index);
    prefix.push_back(std::move(c));
  }

  const std::size_t jobs = nv * (nb + 1);
  std::vector<double> intensity(jobs, 0.0);
  std::vector<std::string> failures(jobs);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t job = 0; job < jobs; ++job) {
    try {
      const std::size_t v = job % nv;
      const std::size_t b = job / nv;  // b == nb is the rf-off baseline
      ExperimentPlan p = plans[v];
      for (auto& s : p.segments)
        if (auto* rf = std::get_if<RfRegion>(&s)) {
          if (b == nb)
            rf->b1 = 0.0;
          else
            rf->field_offset = field_offsets[b];
        }
      const auto out = run_from(p, prefix[v], rf_index);
      intensity[job] = out.detector_intensity.value_or(0.0);
    } catch (const std::exception& e) {
      failures[job] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw InvalidPlan("spectrum job failed: " + f);

  SpectrumResult r;
  r.field_offset = field_offsets;
  for (std::size_t v = 0; v < nv; ++v) r.baseline += weights[v] * intensity[nb * nv + v];
  for (std::size_t b = 0; b < nb; ++b) {
    double acc = 0.0;
    for (std::size_t v = 0; v < nv; ++v) acc += weights[v] * intensity[b * nv + v];
    r.intensity.push_back(acc);
    r.relative_intensity.push_back(r.baseline > 0.0 ? acc / r.baseline : 0.0);
  }
  return r;
}

EchoResult run_gradient_echo(const ExperimentPlan& plan, const SampleHook& on_snapshot) {
  require_coherent_segments(plan);
  if (plan.segments.size() != 2 || count_magnets(plan) != 2)
    throw InvalidPlan("a gradient echo needs exactly two gradient magnets");
  const auto& a = std::get<GradientMagnet>(plan.segments[0]);
  const auto& b = std::get<GradientMagnet>(plan.segments[1]);
  const double tol = 1e-12;
  if (std::abs(a.length - b.length) > tol * a.length ||
      std::abs(a.field.effective_gradient() + b.field.effective_gradient()) >
          tol * std::abs(a.field.effective_gradient()))
    throw InvalidPlan("echo magnets must have equal length and opposite gradient");

  EchoResult r{run_pipeline(plan, {}, on_snapshot), 0.0, 0.0, 0.0, 0.0, 0.0, false};
  r.coherence_initial =
      std::abs(integrate(build_gaussian_state(plan.grid, plan.beam, plan.spin_density), 0, 1));

  ExperimentPlan first = plan;
  first.segments.resize(1);
  r.coherence_first = std::abs(integrate(run_pipeline(first).final_state, 0, 1));
  r.coherence_echo = std::abs(integrate(r.echo.final_state, 0, 1));

  ExperimentPlan same = plan;
  same.segments[1] = a;
  r.coherence_uncompensated = std::abs(integrate(run_pipeline(same).final_state, 0, 1));
  r.recovery_ratio =
      r.coherence_uncompensated > 0.0 ? r.coherence_echo / r.coherence_uncompensated : 0.0;
  r.under_resolved = !modulation_resolved(plan) || !modulation_resolved(same);

  auto& sc = r.echo.trace.scalars;
  sc.emplace_back("coherence_initial", r.coherence_initial);
  sc.emplace_back("coherence_first", r.coherence_first);
  sc.emplace_back("coherence_echo", r.coherence_echo);
  sc.emplace_back("coherence_uncompensated", r.coherence_uncompensated);
  sc.emplace_back("recovery_ratio", r.recovery_ratio);
  sc.emplace_back("under_resolved", r.under_resolved ? 1.0 : 0.0);
  return r;
}

ExperimentPlan mirrored_plan(const ExperimentPlan& plan) {
  ExperimentPlan m = plan;
  m.beam.gyromagnetic_ratio = -plan.beam.gyromagnetic_ratio;
  for (auto& s : m.segments)
    if (auto* rf = std::get_if<RfRegion>(&s)) rf->omega_rf = -rf->omega_rf;
  const auto d = plan.spin_density.rows();
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      m.spin_density(i, j) = plan.spin_density(d - 1 - i, d - 1 - j);
  return m;
}

OracleCheckResult oracle_check(const ExperimentPlan& plan, std::size_t n) {
  plan.validate();
  if (n < 16) throw InvalidGrid("oracle check needs at least 16 nodes per axis");
  std::vector<Segment> segments;
  for (const auto& s : plan.segments) {
    if (!propagates(s)) break;
    segments.push_back(s);
  }
  if (segments.empty()) throw InvalidPlan("no propagating segment precedes the first slit");

  const BeamSpec& beam = plan.beam;
  const double hbar = constants::hbar;
  const double sigma = beam.beam_width / std::sqrt(2.0);
  const double wx = beam.beam_width;
  const double wp = hbar / (std::sqrt(2.0) * sigma);
  const auto dim = static_cast<std::size_t>(plan.spin_density.rows());

  // Centroid trajectories for every sequence of level forces, one sign per
  // magnet, bound the evolved state together with its spreading envelope.
  std::vector<double> forces;
  for (const auto& s : segments) {
    double f = 0.0;
    if (const auto* m = std::get_if<GradientMagnet>(&s))
      f = 0.5 * std::abs(beam.gyromagnetic_ratio * hbar * m->field.effective_gradient());
    forces.push_back(f);
  }
  const std::size_t magnets = static_cast<std::size_t>(
      std::count_if(forces.begin(), forces.end(), [](double f) { return f > 0.0; }));
  if (magnets > 16) throw InvalidPlan("oracle check supports at most 16 gradient magnets");
  auto bounding_box = [&](double scale) {
    double x_max = 0.0, p_max = 0.0, total_time = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << magnets); ++mask) {
      double x = 0.0, p = 0.0;
      std::size_t bit = 0;
      for (std::size_t k = 0; k < segments.size(); ++k) {
        double f = forces[k];
        if (f > 0.0) f *= ((mask >> bit++) & 1) ? -1.0 : 1.0;
        const double tau = scale * segment_length(segments[k]) / beam.velocity;
        for (int sub = 1; sub <= 16; ++sub) {
          const double h = tau * sub / 16.0;
          x_max = std::max(x_max, std::abs(x + p * h / beam.mass + 0.5 * f * h * h / beam.mass));
          p_max = std::max(p_max, std::abs(p + f * h));
        }
        x += p * tau / beam.mass + 0.5 * f * tau * tau / beam.mass;
        p += f * tau;
      }
    }
    for (const auto& s : segments) total_time += scale * segment_length(s) / beam.velocity;
    const double spread = std::hypot(wx, wp * total_time / beam.mass);
    return std::pair{x_max + 5.0 * spread, p_max + 5.0 * wp};
  };

  // Shrink segment lengths until the box leaves at least 16 nodes per 1/e half-width.
  double scale = 1.0;
  double x_reach = 0.0, p_reach = 0.0;
  for (int attempt = 0;; ++attempt) {
    std::tie(x_reach, p_reach) = bounding_box(scale);
    const double dx = 2.0 * x_reach / static_cast<double>(n - 1);
    const double dp = 2.0 * p_reach / static_cast<double>(n - 1);
    if (wx / dx >= 16.0 && wp / dp >= 16.0) break;
    if (attempt > 200) throw InvalidPlan("oracle check could not fit the state on the grid");
    scale *= 0.5;
  }

  OracleCheckResult r;
  r.time_scale = scale;
  r.segments_checked = segments.size();
  r.grid = PhaseSpaceGrid(-x_reach, x_reach, n, -p_reach, p_reach, n);
  const auto line = oracle::aligned_line(r.grid, oracle::required_refinement(r.grid), 4.0);

  Eigen::SelfAdjointEigenSolver<SpinMatrix> solver(plan.spin_density);
  WignerMatrix ewf_state(r.grid, dim);
  WignerMatrix oracle_state(r.grid, dim);
  for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
    const double weight = solver.eigenvalues()(k);
    if (weight <= 1e-12) continue;
    auto psi = oracle::gaussian_spinor(line, sigma, solver.eigenvectors().col(k));
    WignerMatrix w = oracle::wigner_transform(psi, r.grid);
    double t = 0.0;
    for (const auto& s : segments) {
      const auto model = model_for(s, beam, dim);
      const double tau = scale * segment_length(s) / beam.velocity;
      w = split_step(w, *model, tau, beam.mass, 1, {CheckPolicy::ignore});
      psi = oracle::schrodinger_split_step(psi, *model, beam.mass, tau / 64.0, 64, t);
      t += tau;
    }
    oracle::check_support(psi);
    const WignerMatrix wo = oracle::wigner_transform(psi, r.grid);
    auto dst_e = ewf_state.values();
    auto dst_o = oracle_state.values();
    for (std::size_t i = 0; i < dst_e.size(); ++i) {
      dst_e[i] += weight * w.values()[i];
      dst_o[i] += weight * wo.values()[i];
    }
  }
  const double peak = oracle_state.max_abs();
  r.linf_relative = oracle::linf_difference(ewf_state, oracle_state) / peak;
  return r;
}

}  // namespace ewf
