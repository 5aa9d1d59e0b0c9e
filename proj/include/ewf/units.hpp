#pragma once

#include <string>
#include <string_view>

namespace ewf {

enum class Dimension {
  dimensionless,
  length,
  time,
  field,
  gradient,
  momentum,
  mass,
  velocity,
  angular_frequency,
  gyromagnetic_ratio,
};

std::string to_string(Dimension d);

/// Parses "<number> <unit>" into SI. Frequencies given in Hz, kHz or MHz are
/// returned as angular frequencies (rad/s); MHz/T likewise becomes rad/s/T.
/// Throws ValidationError for unknown units, units of the wrong dimension,
/// missing units on dimensional quantities and malformed numbers.
double parse_quantity(std::string_view text, Dimension expected);

/// Shortest decimal representation that reads back to the same double.
std::string format_double(double value);

}  // namespace ewf
