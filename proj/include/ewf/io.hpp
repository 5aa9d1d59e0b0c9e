#pragma once

#include <string>

#include "ewf/experiments.hpp"

namespace ewf {

// Text serializers. Every number is written in its shortest round-trip
// decimal form, so emit followed by read reproduces each value bit for bit
// and identical inputs give byte-identical files. Failures to open, write or
// parse a file raise IoError naming the path.

/// CSV with '#' metadata lines (grid, labels, scalars) followed by the
/// header row and one row per marginal node:
///   sample,z [m],t [s],marginal,pair,coordinate,re,im
/// Rows are grouped in a position block then a momentum block.
void emit_trace(const BeamTrace& trace, const std::string& path);
BeamTrace read_trace(const std::string& path);

/// Self-describing record: grid metadata, time and labels, then for every
/// spin pair a real and an imaginary plane of n_p rows by n_x columns.
void emit_snapshot(const WignerMatrix& w, const std::string& path);
WignerMatrix read_snapshot(const std::string& path);

/// Two columns, "B0 [T],relative_intensity", B0 strictly increasing.
/// read_spectrum fills field_offset and relative_intensity only.
void emit_spectrum(const SpectrumResult& spectrum, const std::string& path);
SpectrumResult read_spectrum(const std::string& path);

}  // namespace ewf
