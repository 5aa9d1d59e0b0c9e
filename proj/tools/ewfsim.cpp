// ewfsim: runs one configured experiment and writes its traces, snapshots
// and milestone report to the output directory.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "ewf/config.hpp"
#include "ewf/errors.hpp"
#include "ewf/io.hpp"
#include "ewf/units.hpp"

namespace {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kParse = 3,
  kValidation = 4,
  kIo = 5,
  kNumerical = 6,
  kOracleMismatch = 8,
  kInternal = 9,
};

constexpr double kOracleTolerance = 1e-3;

using Report = std::vector<std::pair<std::string, std::string>>;

void add(Report& r, const std::string& key, double value) { r.emplace_back(key, ewf::format_double(value)); }
void add(Report& r, const std::string& key, const std::string& value) { r.emplace_back(key, value); }

void add_invariants(Report& r, const ewf::InvariantReport& inv) {
  add(r, "max_hermiticity_ratio", inv.max_hermiticity_ratio);
  add(r, "max_trace_drift", inv.max_trace_drift);
  add(r, "max_boundary_fraction", inv.max_boundary_fraction);
}

void add_scalars(Report& r, const ewf::BeamTrace& trace) {
  for (const auto& [name, value] : trace.scalars) add(r, name, value);
}

std::string render(const Report& r) {
  std::ostringstream out;
  for (const auto& [k, v] : r) out << k << " = " << v << '\n';
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ewf::IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw ewf::IoError("write to '" + path.string() + "' failed");
}

void emit_coherent_table(const ewf::CoherentResult& c, const fs::path& path) {
  std::ostringstream out;
  out << "t [s],k_x [rad/m],k_p [rad*s/(kg*m)],coherence,max_position_marginal [1/m],resolved\n";
  for (const auto& s : c.samples)
    out << ewf::format_double(s.time) << ',' << ewf::format_double(s.k_x) << ','
        << ewf::format_double(s.k_p) << ',' << ewf::format_double(s.coherence) << ','
        << ewf::format_double(s.max_position_marginal) << ',' << (s.resolved ? 1 : 0) << '\n';
  write_text(path, out.str());
}

double total_duration(const ewf::ExperimentPlan& plan) {
  double z = 0.0;
  for (const auto& s : plan.segments) {
    if (const auto* m = std::get_if<ewf::GradientMagnet>(&s)) z += m->length;
    if (const auto* f = std::get_if<ewf::FreeFlight>(&s)) z += f->length;
    if (const auto* rf = std::get_if<ewf::RfRegion>(&s)) z += rf->length;
  }
  return z / plan.beam.velocity;
}

Report run(const ewf::RunConfig& config, const fs::path& dir) {
  Report report;
  add(report, "experiment", ewf::to_string(config.kind));
  const auto& plan = config.plan;

  std::size_t snapshot_count = 0;
  const fs::path snap_dir = dir / "snapshots";
  ewf::SampleHook on_snapshot;
  if (plan.snapshot_every > 0) {
    fs::create_directories(snap_dir);
    on_snapshot = [&](std::size_t index, double, const ewf::WignerMatrix& w) {
      char name[32];
      std::snprintf(name, sizeof name, "snapshot_%05zu.txt", index);
      ewf::emit_snapshot(w, (snap_dir / name).string());
      ++snapshot_count;
    };
  }

  switch (config.kind) {
    case ewf::ExperimentKind::stern_gerlach: {
      const auto r = ewf::run_stern_gerlach(plan, on_snapshot);
      ewf::emit_trace(r.run.trace, (dir / "trace.csv").string());
      add_scalars(report, r.run.trace);
      if (!r.z_momentum_split) add(report, "z_momentum_split_m", "not reached");
      if (!r.z_position_split) add(report, "z_position_split_m", "not reached");
      add_invariants(report, r.run.invariants);
      break;
    }
    case ewf::ExperimentKind::sg_coherent: {
      const double scale = config.coherent.gradient_scale;
      const auto r = ewf::run_sg_coherent(plan, scale, on_snapshot);
      ewf::emit_trace(r.run.trace, (dir / "trace.csv").string());
      emit_coherent_table(r, dir / "coherent.csv");
      add_scalars(report, r.run.trace);
      const double t = config.coherent.report_time > 0.0 ? config.coherent.report_time
                                                         : total_duration(plan);
      add(report, "report_time_s", t);
      add(report, "full_gradient_spatial_frequency_per_m",
          std::abs(r.measured_slope / scale) * t / (2.0 * ewf::constants::pi));
      add(report, "predicted_full_gradient_spatial_frequency_per_m",
          ewf::predicted_spatial_frequency(plan.beam.gyromagnetic_ratio,
                                           r.effective_gradient / scale, t));
      add_invariants(report, r.run.invariants);
      break;
    }
    case ewf::ExperimentKind::rabi: {
      const auto r = ewf::run_rabi(plan, {}, on_snapshot);
      ewf::emit_trace(r.run.trace, (dir / "trace.csv").string());
      add_scalars(report, r.run.trace);
      add_invariants(report, r.run.invariants);
      break;
    }
    case ewf::ExperimentKind::spectrum: {
      const auto& s = *config.spectrum;
      const auto r = ewf::spectrum_scan(plan, s.field_offsets, s.velocities, s.weights);
      ewf::emit_spectrum(r, (dir / "spectrum.csv").string());
      std::size_t dip = 0;
      for (std::size_t k = 1; k < r.relative_intensity.size(); ++k)
        if (r.relative_intensity[k] < r.relative_intensity[dip]) dip = k;
      add(report, "points", static_cast<double>(r.field_offset.size()));
      add(report, "baseline_intensity", r.baseline);
      add(report, "dip_field_T", r.field_offset[dip]);
      add(report, "dip_relative_intensity", r.relative_intensity[dip]);
      break;
    }
    case ewf::ExperimentKind::gradient_echo: {
      const auto r = ewf::run_gradient_echo(plan, on_snapshot);
      ewf::emit_trace(r.echo.trace, (dir / "trace.csv").string());
      add_scalars(report, r.echo.trace);
      add_invariants(report, r.echo.invariants);
      break;
    }
    case ewf::ExperimentKind::custom: {
      const auto r = ewf::run_pipeline(plan, {}, on_snapshot);
      ewf::emit_trace(r.trace, (dir / "trace.csv").string());
      add_scalars(report, r.trace);
      add_invariants(report, r.invariants);
      break;
    }
  }
  if (plan.snapshot_every > 0) add(report, "snapshots", static_cast<double>(snapshot_count));
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extended Wigner function simulator for spin-1/2 beams"};
  std::string config_path;
  std::string output_dir;
  std::size_t snapshot_every = 0;
  unsigned order = 0;
  std::string scheme;
  bool oracle = false;
  int threads = 0;
  long long seed = 0;
  app.add_option("--config", config_path, "run description (YAML)")->required();
  auto* out_opt = app.add_option("--output", output_dir, "output directory");
  auto* snap_opt = app.add_option("--snapshot-every", snapshot_every,
                                  "write a snapshot every N propagation samples (0 = none)");
  auto* order_opt = app.add_option("--order", order, "series truncation order n_max")
                        ->check(CLI::PositiveNumber);
  auto* scheme_opt = app.add_option("--scheme", scheme,
                                    "split_first_order | closed_form_sg | rk4");
  app.add_flag("--oracle-check", oracle, "also compare against the Schrodinger oracle");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "accepted for compatibility; runs are deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    ewf::RunConfig config = ewf::load_config(config_path);
    if (*out_opt) config.output_directory = output_dir;
    if (*snap_opt) config.plan.snapshot_every = snapshot_every;
    if (*order_opt) config.plan.step.truncation_order = order;
    if (*scheme_opt) {
      try {
        config.plan.step.scheme = ewf::scheme_from_string(scheme);
      } catch (const ewf::InvalidStepPlan& e) {
        throw ewf::ValidationError(std::string("--scheme: ") + e.what());
      }
    }
    if (oracle) config.oracle_check = true;
    ewf::validate_config(config);

    const fs::path dir = config.output_directory;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ewf::IoError("cannot create output directory '" + dir.string() + "'");

    Report report = run(config, dir);
    bool oracle_failed = false;
    if (config.oracle_check) {
      const auto check = ewf::oracle_check(config.plan);
      add(report, "oracle_linf_relative", check.linf_relative);
      add(report, "oracle_time_scale", check.time_scale);
      add(report, "oracle_segments_checked", static_cast<double>(check.segments_checked));
      oracle_failed = !(check.linf_relative <= kOracleTolerance);
    }
    const std::string text = render(report);
    write_text(dir / "report.txt", text);
    std::cout << text;
    if (oracle_failed) {
      std::cerr << "ewfsim: oracle discrepancy exceeds " << kOracleTolerance << " of peak\n";
      return kOracleMismatch;
    }
    return kOk;
  } catch (const ewf::ParseError& e) {
    std::cerr << "ewfsim: parse error in '" << config_path << "': " << e.what() << '\n';
    return kParse;
  } catch (const ewf::ValidationError& e) {
    std::cerr << "ewfsim: invalid configuration '" << config_path << "': " << e.what() << '\n';
    return kValidation;
  } catch (const ewf::InvalidPlan& e) {
    std::cerr << "ewfsim: invalid plan: " << e.what() << '\n';
    return kValidation;
  } catch (const ewf::InvalidStepPlan& e) {
    std::cerr << "ewfsim: invalid stepper: " << e.what() << '\n';
    return kValidation;
  } catch (const ewf::IoError& e) {
    std::cerr << "ewfsim: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ewfsim: " << e.what() << '\n';
    return kIo;
  } catch (const ewf::Error& e) {
    std::cerr << "ewfsim: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "ewfsim: internal error: " << e.what() << '\n';
    return kInternal;
  }
}
