#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "mfsr/degrade.hpp"
#include "mfsr/image.hpp"
#include "mfsr/imageio.hpp"

namespace mfsr::testing {

/// Smooth random texture on [20, 235]: uniform noise blurred with a
/// sigma 1.5 Gaussian, then rescaled.
inline Image texture(int side, std::uint64_t seed) {
    Rng rng(seed);
    Image noise(side, side);
    for (double& v : noise.values()) v = rng.uniform(0.0, 255.0);
    Image b = blur(noise, gaussian_kernel(9, 1.5));
    const auto [lo, hi] = std::minmax_element(b.values().begin(), b.values().end());
    const double l = *lo;
    const double h = *hi;
    for (double& v : b.values()) v = 20.0 + 215.0 * (v - l) / (h - l);
    return b;
}

inline DegradationModel table_model(std::uint64_t seed, double noise = 1.4142135623730951) {
    DegradationModel m;
    m.scale = 3;
    m.blur = gaussian_kernel(9, 1.0);
    m.noise_sigma = noise;
    m.rng_seed = seed;
    return m;
}

inline std::string data_path(const std::string& rel) { return std::string(MFSR_TEST_DATA) + "/" + rel; }

}  // namespace mfsr::testing
