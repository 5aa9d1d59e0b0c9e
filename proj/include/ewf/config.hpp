#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ewf/experiments.hpp"

namespace ewf {

enum class ExperimentKind { stern_gerlach, sg_coherent, rabi, spectrum, gradient_echo, custom };

std::string to_string(ExperimentKind kind);

struct SpectrumSettings {
  std::vector<double> field_offsets;  // B_y0 values, T, strictly increasing
  std::vector<double> velocities;     // m/s
  std::vector<double> weights;        // sum to 1
};

struct CoherentSettings {
  double gradient_scale = 1.0;
  /// Time at which the full-gradient spatial frequency is reported; 0 = segment end.
  double report_time = 0.0;
};

/// Fully validated run description in SI units.
struct RunConfig {
  ExperimentKind kind = ExperimentKind::custom;
  ExperimentPlan plan;
  std::optional<SpectrumSettings> spectrum;
  CoherentSettings coherent;
  std::string output_directory = "out";
  bool oracle_check = false;
};

/// Parses a YAML run description. Throws ParseError for malformed or empty
/// documents and ValidationError (message starts with the offending key path)
/// for unknown keys, bad units and inconsistent physics.
RunConfig parse_config(const std::string& text);

/// Reads and parses a file; IoError names the path when it cannot be read.
RunConfig load_config(const std::string& path);

/// Re-runs every cross-check of parse_config on an already built config
/// (used after command-line overrides).
void validate_config(const RunConfig& config);

}  // namespace ewf
