#pragma once

#include <cmath>

#include "ewf/constants.hpp"
#include "ewf/phase_space.hpp"

namespace support {

inline double silver_mass() { return ewf::constants::molar_mass_silver / ewf::constants::avogadro; }

/// Silver beam of the Stern-Gerlach runs: 30 um wide, 60 g/mol m/s spread.
inline ewf::BeamSpec silver_beam() {
  ewf::BeamSpec b;
  b.mass = silver_mass();
  b.gyromagnetic_ratio = ewf::constants::gamma_electron;
  b.velocity = 550.0;
  b.beam_width = 30e-6;
  b.coherence_length = ewf::constants::planck / (60e-3 / ewf::constants::avogadro);
  return b;
}

/// Pure Gaussian beam with |psi|^2 standard deviation sigma.
inline ewf::BeamSpec pure_beam(double sigma, double mass, double gamma) {
  ewf::BeamSpec b;
  b.mass = mass;
  b.gyromagnetic_ratio = gamma;
  b.velocity = 550.0;
  b.beam_width = sigma * std::sqrt(2.0);
  b.coherence_length = ewf::BeamSpec::pure_state_coherence_length(b.beam_width);
  return b;
}

inline double max_abs_difference(const ewf::WignerMatrix& a, const ewf::WignerMatrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k)
    m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

}  // namespace support
