#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ewf/constants.hpp"
#include "ewf/phase_space.hpp"
#include "ewf/potentials.hpp"
#include "ewf/propagator.hpp"

namespace ewf {

// Beamline segments. Lengths are along z; the time spent in a segment is
// length / beam.velocity.
struct GradientMagnet {
  UniaxialGradientField field;
  double length = 0.0;  // m
};

struct FreeFlight {
  double length = 0.0;  // m
};

/// Sharp truncation of W to |x - center| < width / 2.
struct Slit {
  double width = 0.0;  // m
  double center = 0.0;
};

/// Homogeneous field B_y0 with a rotating rf field of amplitude B1 at omega_rf.
struct RfRegion {
  double b1 = 0.0;          // T
  double field_offset = 0.0;  // B_y0, T
  double omega_rf = 0.0;    // rad/s
  double length = 0.0;      // m
};

/// Records sum_eta of the integral of W_{eta eta} over |x - center| < aperture / 2.
struct Detector {
  double aperture = 0.0;  // m
  double center = 0.0;
};

using Segment = std::variant<GradientMagnet, FreeFlight, Slit, RfRegion, Detector>;

std::string segment_name(const Segment& segment);

struct ExperimentPlan {
  BeamSpec beam;
  SpinMatrix spin_density = unpolarised_spin_density();
  std::vector<Segment> segments;
  PhaseSpaceGrid grid{-1.0, 1.0, 2, -1.0, 1.0, 2};
  /// dt = 0 selects the automatic policy: one exact step per sample for
  /// linear commuting segments under the split scheme, default_time_step otherwise.
  StepPlan step;
  std::size_t samples_per_segment = 1;  // trace samples per propagating segment
  std::size_t snapshot_every = 0;       // trace samples between snapshots; 0 = none

  /// Throws InvalidPlan for empty or non-physical segment lists.
  void validate() const;
};

/// Marginals of every spin pair at one z position.
struct TraceSample {
  double z = 0.0;     // m
  double time = 0.0;  // s
  std::vector<std::vector<Complex>> position;  // [eta * d + xi][x node]
  std::vector<std::vector<Complex>> momentum;  // [eta * d + xi][p node]
};

struct BeamTrace {
  PhaseSpaceGrid grid{-1.0, 1.0, 2, -1.0, 1.0, 2};
  std::size_t dim = 2;
  std::vector<std::string> labels;
  std::vector<TraceSample> samples;
  /// Named scalar results in insertion order (milestones, intensities).
  std::vector<std::pair<std::string, double>> scalars;

  std::optional<double> scalar(const std::string& name) const;
};

TraceSample sample_marginals(const WignerMatrix& w, double z);

/// Worst invariant violations seen at trace samples of propagating segments.
struct InvariantReport {
  double max_hermiticity_ratio = 0.0;  // defect / max|W|
  double max_trace_drift = 0.0;        // |trace - entry trace| / entry trace
  double max_boundary_fraction = 0.0;
};

using SampleHook = std::function<void(std::size_t index, double z, const WignerMatrix&)>;

struct PipelineResult {
  WignerMatrix final_state;
  BeamTrace trace;
  InvariantReport invariants;
  std::vector<double> slit_transmission;  // one per slit
  std::optional<double> detector_intensity;
  /// Segment index that produced each trace sample; kInitialSample for z = 0.
  std::vector<std::size_t> sample_segment;

  static constexpr std::size_t kInitialSample = static_cast<std::size_t>(-1);
};

/// Runs every segment of the plan from its initial Gaussian state.
/// `on_sample` sees every trace sample; `on_snapshot` every snapshot_every-th.
PipelineResult run_pipeline(const ExperimentPlan& plan, const SampleHook& on_sample = {},
                            const SampleHook& on_snapshot = {});

struct SlitResult {
  WignerMatrix state;
  double transmitted_fraction = 0.0;
};

/// Throws SlitUnresolved unless width > 2 dx.
SlitResult apply_slit(const WignerMatrix& w, double width, double center = 0.0);

/// Normalized overlap integral sum f g / sqrt(sum f^2 sum g^2) of two marginals.
double marginal_overlap(const std::vector<Complex>& f, const std::vector<Complex>& g);

/// Node of the largest value refined by a three-point parabola, in axis units.
double peak_location(const std::vector<Complex>& f, double origin, double spacing);

/// Coefficient of determination of y = c x^power fitted through the origin.
struct OriginFit {
  double coefficient = 0.0;
  double r_squared = 0.0;
};
OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y,
                             int power);

struct SternGerlachResult {
  PipelineResult run;
  std::vector<double> z;                    // sample positions
  std::vector<double> position_separation;  // peak(alpha) - peak(beta) in x
  std::vector<double> momentum_separation;  // peak(alpha) - peak(beta) in p
  std::vector<double> position_overlap;
  std::vector<double> momentum_overlap;
  std::optional<double> z_momentum_split;  // first z with momentum overlap < threshold
  std::optional<double> z_position_split;
  OriginFit position_fit;  // quadratic
  OriginFit momentum_fit;  // linear
};

inline constexpr double kSplitOverlapThreshold = 0.01;

/// Stern-Gerlach pipeline; the plan must contain exactly one GradientMagnet.
SternGerlachResult run_stern_gerlach(const ExperimentPlan& plan,
                                     const SampleHook& on_snapshot = {});

struct CoherentSample {
  double time = 0.0;
  double k_x = 0.0;  // rad/m, lag-one estimate of the W_ab modulation along x
  double k_p = 0.0;  // rad/(kg m/s), along p
  double coherence = 0.0;  // |integral of W_ab|
  double max_position_marginal = 0.0;  // max_x |integral of W_ab dp|
  bool resolved = true;
};

struct CoherentResult {
  PipelineResult run;
  double gradient_scale = 1.0;
  double effective_gradient = 0.0;  // T/m actually simulated
  std::vector<CoherentSample> samples;
  double measured_slope = 0.0;  // d k_x / dt fitted through the origin, rad/(m s)
  double predicted_slope = 0.0;  // gamma G_eff
  bool under_resolved = false;
};

/// A modulation is resolved while |k| spacing <= pi / 4 on both axes.
inline constexpr double kResolutionLimit = 0.25 * constants::pi;

/// x-polarised Stern-Gerlach run with every magnet gradient multiplied by
/// gradient_scale. W_ab is analysed at every trace sample.
CoherentResult run_sg_coherent(const ExperimentPlan& plan, double gradient_scale,
                               const SampleHook& on_snapshot = {});

/// Spatial frequency |gamma G t| / 2 pi (1/m) of W_ab at full gradient.
double predicted_spatial_frequency(double gyromagnetic_ratio, double gradient, double t);

/// Lag-one autocorrelation wavenumbers (k_x, k_p) of one spin pair.
std::pair<double, double> modulation_wavenumber(const WignerMatrix& w, std::size_t eta,
                                                std::size_t xi);

struct RabiResult {
  PipelineResult run;
  double detector_intensity = 0.0;
  double slit_transmission = 1.0;
};

/// Rabi apparatus. When `field_offset` is set it replaces B_y0 in every rf region.
RabiResult run_rabi(const ExperimentPlan& plan, std::optional<double> field_offset = {},
                    const SampleHook& on_snapshot = {});

struct SpectrumResult {
  std::vector<double> field_offset;        // B_y0, T
  std::vector<double> relative_intensity;  // weighted intensity / weighted rf-off intensity
  std::vector<double> intensity;           // weighted intensity
  double baseline = 0.0;                   // weighted intensity with B1 = 0
};

/// Rabi intensity versus B_y0 averaged over velocities. Jobs run concurrently;
/// results are independent of the thread count.
SpectrumResult spectrum_scan(const ExperimentPlan& plan, const std::vector<double>& field_offsets,
                             const std::vector<double>& velocities,
                             const std::vector<double>& weights);

struct EchoResult {
  PipelineResult echo;
  double coherence_initial = 0.0;         // |integral of W_ab| at z = 0
  double coherence_first = 0.0;           // after the first gradient
  double coherence_echo = 0.0;            // after the reversed gradient
  double coherence_uncompensated = 0.0;   // first gradient kept on for both segments
  double recovery_ratio = 0.0;            // echo / uncompensated
  bool under_resolved = false;
};

/// Plan segments must be two GradientMagnets of equal length and opposite gradient.
EchoResult run_gradient_echo(const ExperimentPlan& plan, const SampleHook& on_snapshot = {});

/// The plan with gamma negated, rf frequencies negated and the spin labels
/// exchanged in the initial state; its alpha traces equal the original beta traces.
ExperimentPlan mirrored_plan(const ExperimentPlan& plan);

struct OracleCheckResult {
  double linf_relative = 0.0;  // L-infinity / peak
  double time_scale = 1.0;     // factor applied to segment lengths
  std::size_t segments_checked = 0;
  PhaseSpaceGrid grid{-1.0, 1.0, 2, -1.0, 1.0, 2};
};

/// Runs the propagating segments before the first slit or detector on a pure
/// Gaussian copy of the beam twice: by EWF propagation and by the Schrodinger
/// oracle. Segment lengths are scaled down until the state fits an n x n grid
/// with at least 16 nodes per 1/e half-width.
OracleCheckResult oracle_check(const ExperimentPlan& plan, std::size_t n = 256);

}  // namespace ewf
