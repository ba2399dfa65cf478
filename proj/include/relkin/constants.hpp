#pragma once

#include <cmath>
#include <stdexcept>

namespace relkin {

/// Particle mass/charge plus c and the (non-reduced) Planck constant h.
struct PhysicalConstants {
    double m;  // mass [kg]
    double q;  // charge [C]
    double c;  // speed of light [m/s]
    double h;  // Planck constant [J s]

    PhysicalConstants(double m_, double q_, double c_, double h_) : m(m_), q(q_), c(c_), h(h_) {
        if (!(m > 0.0) || !(c > 0.0) || !(h > 0.0))
            throw std::domain_error("PhysicalConstants: m, c and h must be positive");
    }
};

/// Test convention m = c = h = 1, q = 0.
inline PhysicalConstants natural_units() { return PhysicalConstants(1.0, 0.0, 1.0, 1.0); }

/// CODATA electron in SI units.
inline PhysicalConstants codata_electron() {
    return PhysicalConstants(9.1093837e-31, -1.602176634e-19, 2.99792458e8, 6.62607015e-34);
}

}  // namespace relkin
