/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/geom/epipolar.hpp"

#include "pat/core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pat::geom {

namespace {

struct RelativePose {
    Mat3 rotation;   // A-frame -> B-frame
    Vec3 translation;
};

RelativePose relative_pose(const CameraModel& camA, const CameraModel& camB) {
    RelativePose rel;
    rel.rotation = camB.rotation * camA.rotation.transposed();
    rel.translation = camB.translation - rel.rotation * camA.translation;
    return rel;
}

bool coincident_centers(const RelativePose& rel) {
    return rel.translation.norm() < 1e-12;
}

struct Sample {
    double u = 0, v = 0;
    bool frontOfCamera = false;
};

// Homogeneous pixel in B of the alpha-pixel ray point at inverse depth rho:
// h(rho) = lineBase + rho * lineDir, with z the camera-frame depth in B.
Sample eval_ray(const Vec3& lineBase, const Vec3& lineDir, double rho) {
    const Vec3 h = lineBase + lineDir * rho;
    Sample s;
    if (h.z > 1e-12) {
        s.frontOfCamera = true;
        s.u = h.x / h.z;
        s.v = h.y / h.z;
    }
    return s;
}

// Nearest in-image integer pixel to (u, v), used as the fallback entry when
// a row would otherwise be empty.
std::uint32_t clamp_to_image(double u, double v, std::uint32_t w, std::uint32_t h) {
    long ui = std::lround(std::clamp(u, 0.0, double(w - 1)));
    long vi = std::lround(std::clamp(v, 0.0, double(h - 1)));
    return std::uint32_t(vi) * w + std::uint32_t(ui);
}

} // namespace

Mat3 fundamental_matrix(const CameraModel& camA, const CameraModel& camB) {
    camA.validate();
    camB.validate();
    const RelativePose rel = relative_pose(camA, camB);
    if (coincident_centers(rel))
        throw std::runtime_error("fundamental_matrix: coincident camera centers (degenerate geometry)");
    const Mat3 kbInvT = camB.intrinsics().inverse().transposed();
    const Mat3 kaInv = camA.intrinsics().inverse();
    Mat3 f = kbInvT * Mat3::skew(rel.translation) * rel.rotation * kaInv;
    const double scale = f.frobenius();
    if (scale < 1e-300)
        throw std::runtime_error("fundamental_matrix: degenerate geometry");
    return f * (1.0 / scale);
}

ReceptiveFieldMap epipolar_rf(const CameraModel& camA, const CameraModel& camB,
                              std::uint32_t n, const DepthRange& range) {
    if (n < 1) throw std::invalid_argument("epipolar_rf: n must be >= 1");
    if (!(range.near > 0) || !(range.far > range.near))
        throw std::invalid_argument("epipolar_rf: invalid depth range");
    camA.validate();
    camB.validate();
    const RelativePose rel = relative_pose(camA, camB);
    if (coincident_centers(rel))
        throw std::runtime_error("epipolar_rf: degenerate epipolar geometry (coincident centers)");

    const Mat3 kb = camB.intrinsics();
    const Mat3 warp = kb * rel.rotation * camA.intrinsics().inverse();
    const Vec3 lineDir = kb * rel.translation;

    const double rhoNear = 1.0 / range.near;
    const double rhoFar = std::isinf(range.far) ? 0.0 : 1.0 / range.far;

    ReceptiveFieldMap map;
    map.alphaWidth = std::uint32_t(camA.width);
    map.alphaHeight = std::uint32_t(camA.height);
    map.betaWidth = std::uint32_t(camB.width);
    map.betaHeight = std::uint32_t(camB.height);
    map.n = n;
    map.indices.assign(map.slots(), 0);
    map.valid.assign(map.slots(), 0);

    parallel_for(0, map.alphaHeight, [&](std::size_t y) {
        for (std::uint32_t x = 0; x < map.alphaWidth; ++x) {
            const std::size_t row = y * map.alphaWidth + x;
            const Vec3 base = warp * Vec3{double(x), double(y), 1.0};
            bool anyValid = false;
            for (std::uint32_t i = 0; i < n; ++i) {
                const double t = n == 1 ? 0.5 : double(i) / double(n - 1);
                const double rho = rhoFar + (rhoNear - rhoFar) * t;
                const Sample s = eval_ray(base, lineDir, rho);
                if (!s.frontOfCamera) continue;
                const long ui = std::lround(s.u);
                const long vi = std::lround(s.v);
                if (ui < 0 || ui >= camB.width || vi < 0 || vi >= camB.height) continue;
                map.indices[row * n + i] = std::uint32_t(vi) * map.betaWidth + std::uint32_t(ui);
                map.valid[row * n + i] = 1;
                anyValid = true;
            }
            if (!anyValid) {
                // Keep the row non-empty: nearest in-image pixel to the
                // sampled segment (midpoint when everything is behind B).
                Sample s = eval_ray(base, lineDir, 0.5 * (rhoNear + rhoFar));
                if (!s.frontOfCamera) s = eval_ray(base, lineDir, rhoNear);
                const double u = s.frontOfCamera ? s.u : double(x);
                const double v = s.frontOfCamera ? s.v : double(y);
                map.indices[row * n] = clamp_to_image(u, v, map.betaWidth, map.betaHeight);
                map.valid[row * n] = 1;
            }
        }
    });
    return map;
}

ReceptiveFieldMap homography_truncated_rf(const CameraModel& camA, const CameraModel& camB,
                                          double planeDepth, std::uint32_t l, std::uint32_t n) {
    if (!(planeDepth > 0)) throw std::invalid_argument("homography_truncated_rf: planeDepth must be > 0");
    if (l < 1) throw std::invalid_argument("homography_truncated_rf: l must be >= 1");
    if (n < 1) throw std::invalid_argument("homography_truncated_rf: n must be >= 1");
    camA.validate();
    camB.validate();
    const RelativePose rel = relative_pose(camA, camB);
    const bool degenerateBaseline = coincident_centers(rel);

    const Mat3 kb = camB.intrinsics();
    const Mat3 warp = kb * rel.rotation * camA.intrinsics().inverse();
    const Vec3 lineDir3 = kb * rel.translation;
    const double rhoPlane = 1.0 / planeDepth;

    // Line direction from the fundamental matrix; for a pure rotation the
    // homography is exact at every depth and the window direction is moot.
    Mat3 f;
    if (!degenerateBaseline) f = fundamental_matrix(camA, camB);

    ReceptiveFieldMap map;
    map.alphaWidth = std::uint32_t(camA.width);
    map.alphaHeight = std::uint32_t(camA.height);
    map.betaWidth = std::uint32_t(camB.width);
    map.betaHeight = std::uint32_t(camB.height);
    map.n = n;
    map.indices.assign(map.slots(), 0);
    map.valid.assign(map.slots(), 0);

    parallel_for(0, map.alphaHeight, [&](std::size_t y) {
        std::vector<std::uint32_t> candidates;
        candidates.reserve(2 * l + 1);
        for (std::uint32_t x = 0; x < map.alphaWidth; ++x) {
            const std::size_t row = y * map.alphaWidth + x;
            const Vec3 h{double(x), double(y), 1.0};
            const Sample anchor = eval_ray(warp * h, lineDir3, rhoPlane);

            double dirU = 1.0, dirV = 0.0;
            if (!degenerateBaseline) {
                const Vec3 line = f * h;
                const double norm = std::hypot(line.x, line.y);
                if (norm > 1e-12) {
                    dirU = line.y / norm;
                    dirV = -line.x / norm;
                }
            }

            candidates.clear();
            if (anchor.frontOfCamera) {
                for (long k = -long(l); k <= long(l); ++k) {
                    const double u = anchor.u + double(k) * dirU;
                    const double v = anchor.v + double(k) * dirV;
                    const long ui = std::lround(u);
                    const long vi = std::lround(v);
                    if (ui < 0 || ui >= camB.width || vi < 0 || vi >= camB.height) continue;
                    candidates.push_back(std::uint32_t(vi) * map.betaWidth + std::uint32_t(ui));
                }
            }

            if (candidates.empty()) {
                const double u = anchor.frontOfCamera ? anchor.u : double(x);
                const double v = anchor.frontOfCamera ? anchor.v : double(y);
                map.indices[row * n] = clamp_to_image(u, v, map.betaWidth, map.betaHeight);
                map.valid[row * n] = 1;
                continue;
            }

            const std::size_t count = candidates.size();
            if (count <= n) {
                for (std::size_t i = 0; i < count; ++i) {
                    map.indices[row * n + i] = candidates[i];
                    map.valid[row * n + i] = 1;
                }
            } else {
                for (std::uint32_t i = 0; i < n; ++i) {
                    const double t = n == 1 ? 0.5 : double(i) / double(n - 1);
                    const std::size_t pick = std::size_t(std::lround(t * double(count - 1)));
                    map.indices[row * n + i] = candidates[pick];
                    map.valid[row * n + i] = 1;
                }
            }
        }
    });
    return map;
}

ReceptiveFieldMap horizontal_rf(std::uint32_t width, std::uint32_t height,
                                std::uint32_t maxDisparity, std::uint32_t n) {
    if (width == 0 || height == 0 || n == 0)
        throw std::invalid_argument("horizontal_rf: zero dimension");
    ReceptiveFieldMap map;
    map.alphaWidth = map.betaWidth = width;
    map.alphaHeight = map.betaHeight = height;
    map.n = n;
    map.indices.assign(map.slots(), 0);
    map.valid.assign(map.slots(), 0);
    for (std::uint32_t y = 0; y < height; ++y) {
        for (std::uint32_t x = 0; x < width; ++x) {
            const std::size_t row = std::size_t(y) * width + x;
            for (std::uint32_t i = 0; i < n; ++i) {
                const double t = n == 1 ? 0.0 : double(i) / double(n - 1);
                const long disp = std::lround(t * double(maxDisparity));
                const long u = long(x) - disp;
                if (u < 0) continue;
                map.indices[row * n + i] = y * width + std::uint32_t(u);
                map.valid[row * n + i] = 1;
            }
        }
    }
    return map;
}

} // namespace pat::geom
