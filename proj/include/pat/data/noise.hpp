/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/rng.hpp"
#include "pat/geom/linalg.hpp"

#include <cmath>
#include <cstdint>

namespace pat::data {

/// Deterministic 3D value noise in [-1, 1]: hashed lattice values with
/// smoothstep-interpolated trilinear blending. Keyed by an explicit seed so
/// every primitive carries an independent field.
inline double value_noise3(const geom::Vec3& p, std::uint64_t seed) {
    const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
    const std::int64_t ix = std::int64_t(fx), iy = std::int64_t(fy), iz = std::int64_t(fz);
    auto lattice = [seed](std::int64_t x, std::int64_t y, std::int64_t z) {
        std::uint64_t h = hash_combine(seed, std::uint64_t(x) * 0x8da6b343ULL);
        h = hash_combine(h, std::uint64_t(y) * 0xd8163841ULL);
        h = hash_combine(h, std::uint64_t(z) * 0xcb1ab31fULL);
        return double(h >> 11) * 0x1.0p-52 - 1.0; // [-1, 1)
    };
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double tx = smooth(p.x - fx), ty = smooth(p.y - fy), tz = smooth(p.z - fz);
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double planes[2];
    for (int dz = 0; dz < 2; ++dz) {
        const double v00 = lattice(ix, iy, iz + dz), v10 = lattice(ix + 1, iy, iz + dz);
        const double v01 = lattice(ix, iy + 1, iz + dz), v11 = lattice(ix + 1, iy + 1, iz + dz);
        planes[dz] = lerp(lerp(v00, v10, tx), lerp(v01, v11, tx), ty);
    }
    return lerp(planes[0], planes[1], tz);
}

/// Central-difference gradient of the noise field (for bump shading).
inline geom::Vec3 value_noise3_grad(const geom::Vec3& p, std::uint64_t seed, double h = 1e-3) {
    const double inv = 1.0 / (2.0 * h);
    return {
        (value_noise3({p.x + h, p.y, p.z}, seed) - value_noise3({p.x - h, p.y, p.z}, seed)) * inv,
        (value_noise3({p.x, p.y + h, p.z}, seed) - value_noise3({p.x, p.y - h, p.z}, seed)) * inv,
        (value_noise3({p.x, p.y, p.z + h}, seed) - value_noise3({p.x, p.y, p.z - h}, seed)) * inv,
    };
}

} // namespace pat::data
