#pragma once

#include <numbers>

// Physical constants in SI units (CODATA 2018).
namespace ewf::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double planck = 6.62607015e-34;           // J s
inline constexpr double hbar = planck / (2.0 * pi);        // J s
inline constexpr double avogadro = 6.02214076e23;          // 1/mol
inline constexpr double bohr_magneton = 9.2740100783e-24;  // J/T
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

// Gyromagnetic ratios carry their physical sign (rad s^-1 T^-1).
inline constexpr double gamma_electron = -1.76085963023e11;
inline constexpr double gamma_fluorine19 = 2.518148e8;

// Molar masses (kg/mol).
inline constexpr double molar_mass_silver = 107.8682e-3;
inline constexpr double molar_mass_naf = 41.988173e-3;

inline constexpr double gauss = 1e-4;  // T

}  // namespace ewf::constants
