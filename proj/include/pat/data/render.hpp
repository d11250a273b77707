/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/data/scene.hpp"
#include "pat/geom/camera.hpp"
#include "pat/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pat::data {

/// Closest intersection along a ray. `t` is the ray parameter; when the ray
/// direction is a camera pixel_ray (camera-frame z component 1), `t` equals
/// the camera-frame depth of the hit. `normal` is the true geometric surface
/// normal, oriented toward the ray origin.
struct RayHit {
    double t = 0;
    Vec3 point{};
    Vec3 normal{};
    std::size_t primitive = 0;
};

/// Closest hit among all scene primitives with t in (tMin, tMax), or empty.
std::optional<RayHit> trace(const Scene& scene, const Vec3& origin, const Vec3& dir,
                            double tMin = 1e-6, double tMax = 1e30);

struct RenderOptions {
    int lensRays = 0;        // 0 => ideal pinhole; otherwise thin-lens samples
    double lensRadius = 0.0; // aperture radius, meters
    double focusDepth = 2.0; // camera-frame depth of the focal plane
    std::uint64_t seed = 0;  // lens sampling stream
};

/// Rendered view: color is H x W x 3 in [0, 1], depth is H x W x 1 holding
/// the camera-frame depth of the surface under the pixel center, and hit
/// flags one byte per pixel (0 where the ray escapes to the background;
/// depth is 0 there). Depth always comes from the central pinhole ray, so
/// it stays exact even with lens sampling or bump-mapped shading.
struct RenderOutput {
    nn::Tensor<float> color;
    nn::Tensor<float> depth;
    std::vector<std::uint8_t> hit;
};

RenderOutput render(const Scene& scene, const geom::CameraModel& camera,
                    const RenderOptions& options = {});

} // namespace pat::data
