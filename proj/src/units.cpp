#include "ewf/units.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "ewf/constants.hpp"
#include "ewf/errors.hpp"

namespace ewf {

namespace {

struct Unit {
  std::string_view symbol;
  Dimension dimension;
  double factor;
};

constexpr double kMolarMomentum = 1e-3 / constants::avogadro;
constexpr double kTwoPi = 2.0 * constants::pi;

constexpr std::array kUnits{
    Unit{"m", Dimension::length, 1.0},
    Unit{"cm", Dimension::length, 1e-2},
    Unit{"mm", Dimension::length, 1e-3},
    Unit{"um", Dimension::length, 1e-6},
    Unit{"μm", Dimension::length, 1e-6},
    Unit{"nm", Dimension::length, 1e-9},
    Unit{"s", Dimension::time, 1.0},
    Unit{"ms", Dimension::time, 1e-3},
    Unit{"us", Dimension::time, 1e-6},
    Unit{"μs", Dimension::time, 1e-6},
    Unit{"ns", Dimension::time, 1e-9},
    Unit{"T", Dimension::field, 1.0},
    Unit{"mT", Dimension::field, 1e-3},
    Unit{"G", Dimension::field, constants::gauss},
    Unit{"T/m", Dimension::gradient, 1.0},
    Unit{"G/cm", Dimension::gradient, constants::gauss / 1e-2},
    Unit{"G/mm", Dimension::gradient, constants::gauss / 1e-3},
    Unit{"G/um", Dimension::gradient, constants::gauss / 1e-6},
    Unit{"G/μm", Dimension::gradient, constants::gauss / 1e-6},
    Unit{"kg*m/s", Dimension::momentum, 1.0},
    Unit{"g_mol_m_per_s", Dimension::momentum, kMolarMomentum},
    Unit{"kg", Dimension::mass, 1.0},
    Unit{"g_per_mol", Dimension::mass, kMolarMomentum},
    Unit{"u", Dimension::mass, constants::atomic_mass_unit},
    Unit{"m/s", Dimension::velocity, 1.0},
    Unit{"rad/s", Dimension::angular_frequency, 1.0},
    Unit{"Hz", Dimension::angular_frequency, kTwoPi},
    Unit{"kHz", Dimension::angular_frequency, kTwoPi * 1e3},
    Unit{"MHz", Dimension::angular_frequency, kTwoPi * 1e6},
    Unit{"rad/s/T", Dimension::gyromagnetic_ratio, 1.0},
    Unit{"MHz/T", Dimension::gyromagnetic_ratio, kTwoPi * 1e6},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string to_string(Dimension d) {
  switch (d) {
    case Dimension::dimensionless: return "dimensionless";
    case Dimension::length: return "length";
    case Dimension::time: return "time";
    case Dimension::field: return "magnetic field";
    case Dimension::gradient: return "field gradient";
    case Dimension::momentum: return "momentum";
    case Dimension::mass: return "mass";
    case Dimension::velocity: return "velocity";
    case Dimension::angular_frequency: return "frequency";
    case Dimension::gyromagnetic_ratio: return "gyromagnetic ratio";
  }
  return "unknown";
}

double parse_quantity(std::string_view text, Dimension expected) {
  const std::string_view s = trim(text);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || !std::isfinite(value))
    throw ValidationError("malformed number in '" + std::string(text) + "'");
  const std::string_view unit = trim(s.substr(static_cast<std::size_t>(end - s.data())));
  if (unit.empty()) {
    if (expected == Dimension::dimensionless) return value;
    throw ValidationError("'" + std::string(text) + "' needs a " + to_string(expected) + " unit");
  }
  for (const auto& u : kUnits) {
    if (u.symbol != unit) continue;
    if (u.dimension != expected)
      throw ValidationError("unit '" + std::string(unit) + "' is a " + to_string(u.dimension) +
                            " unit, expected " + to_string(expected));
    return value * u.factor;
  }
  throw ValidationError("unknown unit '" + std::string(unit) + "'");
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw IoError("cannot format number");
  return std::string(buf.data(), end);
}

}  // namespace ewf
