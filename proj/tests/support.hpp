#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "edlab/statespace.hpp"

namespace edlab::testing {

// Normalized Gaussian density with a prescribed phase function of the grid point.
template <class PhiF>
EnsembleState gaussian_state(const ConfigGrid& g, double width, std::array<double, 3> center, PhiF&& phi) {
    return sample_state(
        g,
        [&](const std::array<double, 3>& p) {
            double q = 0.0;
            for (int a = 0; a < g.n_sites; ++a) q += (p[a] - center[a]) * (p[a] - center[a]);
            return std::exp(-0.5 * q / (width * width));
        },
        phi);
}

inline EnsembleState gaussian_state(const ConfigGrid& g, double width, std::array<double, 3> center = {0.0, 0.0, 0.0}) {
    return gaussian_state(g, width, center, [](const std::array<double, 3>&) { return 0.0; });
}

// Smooth random state whose density stays well above the floor on the box.
inline EnsembleState random_smooth_state(const ConfigGrid& g, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const double width = 0.45 * g.L * (1.0 + 0.2 * U(gen));
    std::array<double, 3> c{0.2 * U(gen), 0.2 * U(gen), 0.2 * U(gen)};
    std::array<double, 10> b{};
    for (double& v : b) v = 0.4 * U(gen);
    const double wobble = 0.3 * U(gen);
    return sample_state(
        g,
        [&](const std::array<double, 3>& p) {
            double q = 0.0;
            for (int a = 0; a < g.n_sites; ++a) q += (p[a] - c[a]) * (p[a] - c[a]);
            return std::exp(-0.5 * q / (width * width)) * (1.0 + wobble * std::sin(p[0]));
        },
        [&](const std::array<double, 3>& p) {
            return b[0] * p[0] + b[1] * p[1] + b[2] * p[2] + 0.1 * (b[3] * p[0] * p[0] + b[4] * p[0] * p[1] + b[5] * p[1] * p[1]) +
                   0.1 * b[6] * p[0] * p[2];
        });
}

}  // namespace edlab::testing
