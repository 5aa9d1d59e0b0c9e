#include "ewf/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ewf/errors.hpp"
#include "ewf/units.hpp"

namespace ewf {

namespace {

// A YAML node together with its key path for error messages.
class Reader {
 public:
  Reader(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const YAML::Node& node() const { return node_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError((path_.empty() ? std::string("<root>") : path_) + ": " + msg);
  }

  std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return node_.IsMap() && node_[key]; }

  Reader child(const std::string& key) const {
    if (!has(key)) Reader(YAML::Node(), child_path(key)).fail("required key is missing");
    return {node_[key], child_path(key)};
  }

  std::optional<Reader> optional_child(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return Reader(node_[key], child_path(key));
  }

  Reader element(std::size_t k) const {
    return {node_[k], path_ + "[" + std::to_string(k) + "]"};
  }

  void require_map(std::initializer_list<const char*> allowed) const {
    if (!node_.IsMap()) fail("expected a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
        fail("unknown key '" + key + "'");
    }
  }

  std::size_t sequence_size() const {
    if (!node_.IsSequence()) fail("expected a list");
    return node_.size();
  }

  std::string scalar() const {
    if (!node_.IsScalar()) fail("expected a scalar value");
    return node_.Scalar();
  }

  double quantity(Dimension d) const {
    try {
      return parse_quantity(scalar(), d);
    } catch (const ValidationError& e) {
      if (std::string_view(e.what()).starts_with(path_)) throw;
      fail(e.what());
    }
  }

  template <class T>
  T as() const {
    try {
      return node_.as<T>();
    } catch (const YAML::Exception&) {
      fail("cannot read '" + (node_.IsScalar() ? node_.Scalar() : std::string("<node>")) + "'");
    }
  }

  std::size_t count() const {
    const auto s = scalar();
    if (s.empty() || s.front() == '-') fail("expected a non-negative integer");
    return as<std::size_t>();
  }

 private:
  YAML::Node node_;
  std::string path_;
};

ExperimentKind parse_kind(const Reader& r) {
  const auto s = r.scalar();
  for (auto k : {ExperimentKind::stern_gerlach, ExperimentKind::sg_coherent, ExperimentKind::rabi,
                 ExperimentKind::spectrum, ExperimentKind::gradient_echo, ExperimentKind::custom})
    if (to_string(k) == s) return k;
  r.fail("unknown experiment '" + s + "'");
}

BeamSpec parse_beam(const Reader& r) {
  r.require_map({"mass", "gyromagnetic_ratio", "velocity", "beam_width", "coherence_length",
                 "momentum_spread"});
  BeamSpec b;
  b.mass = r.child("mass").quantity(Dimension::mass);
  b.gyromagnetic_ratio = r.child("gyromagnetic_ratio").quantity(Dimension::gyromagnetic_ratio);
  b.velocity = r.child("velocity").quantity(Dimension::velocity);
  b.beam_width = r.child("beam_width").quantity(Dimension::length);
  if (r.has("coherence_length") == r.has("momentum_spread"))
    r.fail("give exactly one of coherence_length and momentum_spread");
  if (auto lc = r.optional_child("coherence_length")) {
    if (lc->scalar() == "pure")
      b.coherence_length = BeamSpec::pure_state_coherence_length(b.beam_width);
    else
      b.coherence_length = lc->quantity(Dimension::length);
  } else {
    const auto dp = r.child("momentum_spread");
    const double spread = dp.quantity(Dimension::momentum);
    if (!(spread > 0.0)) dp.fail("momentum spread must be positive");
    b.coherence_length = constants::planck / spread;
  }
  try {
    b.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return b;
}

SpinMatrix parse_spin(const Reader& r) {
  if (r.node().IsScalar()) {
    const auto s = r.scalar();
    if (s == "unpolarised" || s == "unpolarized") return unpolarised_spin_density();
    if (s == "x_polarised" || s == "x_polarized") return x_polarised_spin_density();
    SpinMatrix rho = SpinMatrix::Zero(2, 2);
    if (s == "alpha") {
      rho(0, 0) = 1.0;
      return rho;
    }
    if (s == "beta") {
      rho(1, 1) = 1.0;
      return rho;
    }
    r.fail("unknown spin state '" + s + "'");
  }
  const std::size_t d = r.sequence_size();
  if (d == 0) r.fail("spin density must not be empty");
  SpinMatrix rho(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    const auto row = r.element(i);
    if (row.sequence_size() != d) row.fail("spin density must be square");
    for (std::size_t j = 0; j < d; ++j)
      rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          row.element(j).quantity(Dimension::dimensionless);
  }
  try {
    validate_spin_density(rho);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return rho;
}

std::pair<double, double> parse_range(const Reader& r, Dimension d) {
  if (r.sequence_size() != 2) r.fail("expected [min, max]");
  return {r.element(0).quantity(d), r.element(1).quantity(d)};
}

PhaseSpaceGrid parse_grid(const Reader& r) {
  r.require_map({"x", "p", "n_x", "n_p"});
  const auto [x0, x1] = parse_range(r.child("x"), Dimension::length);
  const auto [p0, p1] = parse_range(r.child("p"), Dimension::momentum);
  try {
    return PhaseSpaceGrid(x0, x1, r.child("n_x").count(), p0, p1, r.child("n_p").count());
  } catch (const InvalidGrid& e) {
    r.fail(e.what());
  }
}

CheckPolicy parse_policy(const Reader& r) {
  const auto s = r.scalar();
  if (s == "ignore") return CheckPolicy::ignore;
  if (s == "warn") return CheckPolicy::warn;
  if (s == "error") return CheckPolicy::error;
  r.fail("expected ignore, warn or error");
}

StepPlan parse_stepper(const Reader& r) {
  r.require_map({"scheme", "dt", "order", "stability", "boundary", "boundary_tolerance",
                 "boundary_band"});
  StepPlan s;
  s.stability_policy = CheckPolicy::warn;
  if (auto v = r.optional_child("scheme")) {
    try {
      s.scheme = scheme_from_string(v->scalar());
    } catch (const InvalidStepPlan& e) {
      v->fail(e.what());
    }
  }
  if (auto v = r.optional_child("dt")) {
    if (v->scalar() != "auto") {
      s.dt = v->quantity(Dimension::time);
      if (!(s.dt > 0.0)) v->fail("time step must be positive or 'auto'");
    }
  }
  if (auto v = r.optional_child("order")) {
    s.truncation_order = static_cast<unsigned>(v->count());
    if (s.truncation_order == 0) v->fail("truncation order must be at least 1");
  }
  if (auto v = r.optional_child("stability")) s.stability_policy = parse_policy(*v);
  if (auto v = r.optional_child("boundary")) s.boundary.policy = parse_policy(*v);
  if (auto v = r.optional_child("boundary_tolerance")) {
    s.boundary.tolerance = v->quantity(Dimension::dimensionless);
    if (!(s.boundary.tolerance > 0.0)) v->fail("tolerance must be positive");
  }
  if (auto v = r.optional_child("boundary_band")) s.boundary.band = v->count();
  return s;
}

UniaxialGradientField parse_field(const Reader& r) {
  UniaxialGradientField f;
  f.gradient = r.child("gradient").quantity(Dimension::gradient);
  if (auto v = r.optional_child("field")) f.field_at_origin = v->quantity(Dimension::field);
  if (auto v = r.optional_child("polarity")) {
    const int p = v->as<int>();
    if (p != 1 && p != -1) v->fail("polarity must be 1 or -1");
    f.polarity = p;
  }
  return f;
}

Segment parse_segment(const Reader& r) {
  if (!r.node().IsMap() || r.node().size() != 1)
    r.fail("each segment is a mapping with a single segment-type key");
  const auto type = r.node().begin()->first.as<std::string>();
  const Reader body = r.child(type);
  if (type == "gradient_magnet") {
    body.require_map({"length", "gradient", "field", "polarity"});
    return GradientMagnet{parse_field(body), body.child("length").quantity(Dimension::length)};
  }
  if (type == "free_flight") {
    body.require_map({"length"});
    return FreeFlight{body.child("length").quantity(Dimension::length)};
  }
  if (type == "slit") {
    body.require_map({"width", "center"});
    Slit s{body.child("width").quantity(Dimension::length), 0.0};
    if (auto v = body.optional_child("center")) s.center = v->quantity(Dimension::length);
    return s;
  }
  if (type == "rf_region") {
    body.require_map({"length", "b1", "field", "frequency"});
    RfRegion rf;
    rf.length = body.child("length").quantity(Dimension::length);
    rf.b1 = body.child("b1").quantity(Dimension::field);
    if (auto v = body.optional_child("field")) rf.field_offset = v->quantity(Dimension::field);
    if (auto v = body.optional_child("frequency"))
      rf.omega_rf = v->quantity(Dimension::angular_frequency);
    return rf;
  }
  if (type == "detector") {
    body.require_map({"aperture", "center"});
    Detector d{body.child("aperture").quantity(Dimension::length), 0.0};
    if (auto v = body.optional_child("center")) d.center = v->quantity(Dimension::length);
    return d;
  }
  r.fail("unknown segment type '" + type + "'");
}

SpectrumSettings parse_spectrum(const Reader& r) {
  r.require_map({"field", "velocities", "weights"});
  SpectrumSettings s;
  const Reader field = r.child("field");
  if (field.node().IsMap()) {
    field.require_map({"from", "to", "points"});
    const double a = field.child("from").quantity(Dimension::field);
    const double b = field.child("to").quantity(Dimension::field);
    const std::size_t n = field.child("points").count();
    if (n < 2) field.fail("points must be at least 2");
    if (!(b > a)) field.fail("'to' must exceed 'from'");
    for (std::size_t k = 0; k < n; ++k)
      s.field_offsets.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  } else {
    for (std::size_t k = 0; k < field.sequence_size(); ++k)
      s.field_offsets.push_back(field.element(k).quantity(Dimension::field));
  }
  const Reader vel = r.child("velocities");
  for (std::size_t k = 0; k < vel.sequence_size(); ++k)
    s.velocities.push_back(vel.element(k).quantity(Dimension::velocity));
  if (auto w = r.optional_child("weights")) {
    for (std::size_t k = 0; k < w->sequence_size(); ++k)
      s.weights.push_back(w->element(k).quantity(Dimension::dimensionless));
  } else {
    s.weights.assign(s.velocities.size(), 1.0 / static_cast<double>(s.velocities.size()));
  }
  return s;
}

std::size_t count_segments(const ExperimentPlan& plan, auto predicate) {
  return static_cast<std::size_t>(
      std::count_if(plan.segments.begin(), plan.segments.end(), predicate));
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::stern_gerlach: return "stern_gerlach";
    case ExperimentKind::sg_coherent: return "sg_coherent";
    case ExperimentKind::rabi: return "rabi";
    case ExperimentKind::spectrum: return "spectrum";
    case ExperimentKind::gradient_echo: return "gradient_echo";
    case ExperimentKind::custom: return "custom";
  }
  return "unknown";
}

void validate_config(const RunConfig& c) {
  const auto& plan = c.plan;
  try {
    plan.validate();
  } catch (const InvalidPlan& e) {
    throw ValidationError(std::string("segments: ") + e.what());
  }

  const auto& g = plan.grid;
  const double nodes_x = plan.beam.beam_width / g.dx();
  const double nodes_p = plan.beam.momentum_half_width() / g.dp();
  if (nodes_x < 4.0 || nodes_p < 4.0) {
    std::ostringstream msg;
    msg << "grid: beam half-widths span " << nodes_x << " (x) and " << nodes_p
        << " (p) nodes; at least 4 are required";
    throw ValidationError(msg.str());
  }

  const auto is_magnet = [](const Segment& s) { return std::holds_alternative<GradientMagnet>(s); };
  const auto is_rf = [](const Segment& s) { return std::holds_alternative<RfRegion>(s); };
  const auto is_detector = [](const Segment& s) { return std::holds_alternative<Detector>(s); };
  for (std::size_t k = 0; k < plan.segments.size(); ++k) {
    const std::string where = "segments[" + std::to_string(k) + "]";
    if (const auto* slit = std::get_if<Slit>(&plan.segments[k]); slit && !(slit->width > 2.0 * g.dx()))
      throw ValidationError(where + ".slit.width: slit is not resolved by the grid (needs > 2 dx = " +
                            format_double(2.0 * g.dx()) + " m)");
    if (const auto* rf = std::get_if<RfRegion>(&plan.segments[k]);
        rf && rf->b1 != 0.0 && plan.step.scheme == Scheme::closed_form_sg)
      throw ValidationError(where + ".rf_region: closed_form_sg cannot propagate an rf region");
  }
  if (plan.step.scheme != Scheme::split_first_order && plan.step.truncation_order != 1)
    throw ValidationError("stepper.order: orders above 1 need the split_first_order scheme");

  const bool coherent_spin = plan.spin_density.rows() == 2 && std::abs(plan.spin_density(0, 1)) > 0.0;
  const bool only_magnets_and_flights = std::all_of(
      plan.segments.begin(), plan.segments.end(), [](const Segment& s) {
        return std::holds_alternative<GradientMagnet>(s) || std::holds_alternative<FreeFlight>(s);
      });

  switch (c.kind) {
    case ExperimentKind::stern_gerlach:
      if (count_segments(plan, is_magnet) != 1)
        throw ValidationError("segments: stern_gerlach needs exactly one gradient_magnet");
      break;
    case ExperimentKind::sg_coherent:
      if (!only_magnets_and_flights)
        throw ValidationError("segments: sg_coherent accepts gradient_magnet and free_flight only");
      if (!coherent_spin) throw ValidationError("spin: sg_coherent needs alpha-beta coherence");
      if (!(c.coherent.gradient_scale > 0.0))
        throw ValidationError("coherent.gradient_scale: must be positive");
      if (c.coherent.report_time < 0.0)
        throw ValidationError("coherent.report_time: must not be negative");
      break;
    case ExperimentKind::rabi:
    case ExperimentKind::spectrum:
      if (count_segments(plan, is_rf) == 0 || count_segments(plan, is_detector) == 0)
        throw ValidationError("segments: " + to_string(c.kind) +
                              " needs an rf_region and a detector");
      break;
    case ExperimentKind::gradient_echo: {
      if (plan.segments.size() != 2 || count_segments(plan, is_magnet) != 2)
        throw ValidationError("segments: gradient_echo needs exactly two gradient_magnet segments");
      const auto& a = std::get<GradientMagnet>(plan.segments[0]);
      const auto& b = std::get<GradientMagnet>(plan.segments[1]);
      if (std::abs(a.length - b.length) > 1e-12 * a.length ||
          std::abs(a.field.effective_gradient() + b.field.effective_gradient()) >
              1e-12 * std::abs(a.field.effective_gradient()))
        throw ValidationError("segments: echo magnets need equal length and opposite gradient");
      if (!coherent_spin) throw ValidationError("spin: gradient_echo needs alpha-beta coherence");
      break;
    }
    case ExperimentKind::custom:
      break;
  }

  if (c.kind == ExperimentKind::spectrum) {
    if (!c.spectrum) throw ValidationError("spectrum: required for a spectrum experiment");
    const auto& s = *c.spectrum;
    if (s.velocities.empty()) throw ValidationError("spectrum.velocities: at least one is required");
    if (s.weights.size() != s.velocities.size())
      throw ValidationError("spectrum.weights: one weight per velocity is required");
    for (double v : s.velocities)
      if (!(v > 0.0)) throw ValidationError("spectrum.velocities: must be positive");
    for (double w : s.weights)
      if (!(w >= 0.0)) throw ValidationError("spectrum.weights: must not be negative");
    if (std::abs(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) - 1.0) > 1e-9)
      throw ValidationError("spectrum.weights: must sum to 1");
    if (s.field_offsets.empty()) throw ValidationError("spectrum.field: no values");
    for (std::size_t k = 1; k < s.field_offsets.size(); ++k)
      if (!(s.field_offsets[k] > s.field_offsets[k - 1]))
        throw ValidationError("spectrum.field: values must increase strictly");
  } else if (c.spectrum) {
    throw ValidationError("spectrum: only valid for a spectrum experiment");
  }
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(std::string("malformed document: ") + e.what());
  }
  if (!root || root.IsNull()) throw ParseError("empty document");
  if (!root.IsMap()) throw ParseError("top level must be a mapping");

  const Reader r(root, "");
  r.require_map({"experiment", "beam", "spin", "grid", "stepper", "trace", "segments", "coherent",
                 "spectrum", "output", "oracle_check"});

  RunConfig c;
  c.kind = parse_kind(r.child("experiment"));
  c.plan.beam = parse_beam(r.child("beam"));
  c.plan.spin_density =
      r.has("spin") ? parse_spin(r.child("spin")) : unpolarised_spin_density();
  c.plan.grid = parse_grid(r.child("grid"));
  c.plan.step = r.has("stepper") ? parse_stepper(r.child("stepper")) : StepPlan{};
  c.plan.step.mass = c.plan.beam.mass;

  if (auto t = r.optional_child("trace")) {
    t->require_map({"samples_per_segment", "snapshot_every"});
    if (auto v = t->optional_child("samples_per_segment")) {
      c.plan.samples_per_segment = v->count();
      if (c.plan.samples_per_segment == 0) v->fail("must be at least 1");
    }
    if (auto v = t->optional_child("snapshot_every")) c.plan.snapshot_every = v->count();
  }

  const Reader segs = r.child("segments");
  for (std::size_t k = 0; k < segs.sequence_size(); ++k)
    c.plan.segments.push_back(parse_segment(segs.element(k)));

  if (auto v = r.optional_child("coherent")) {
    if (c.kind != ExperimentKind::sg_coherent) v->fail("only valid for an sg_coherent experiment");
    v->require_map({"gradient_scale", "report_time"});
    if (auto s = v->optional_child("gradient_scale"))
      c.coherent.gradient_scale = s->quantity(Dimension::dimensionless);
    if (auto s = v->optional_child("report_time"))
      c.coherent.report_time = s->quantity(Dimension::time);
  }
  if (auto v = r.optional_child("spectrum")) c.spectrum = parse_spectrum(*v);
  if (auto v = r.optional_child("output")) {
    v->require_map({"directory"});
    c.output_directory = v->child("directory").scalar();
  }
  if (auto v = r.optional_child("oracle_check")) c.oracle_check = v->as<bool>();

  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace ewf
