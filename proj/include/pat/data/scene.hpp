/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/geom/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pat::data {

using geom::Mat3;
using geom::Vec3;

enum class PrimitiveKind : int { Plane = 0, Cube = 1, Sphere = 2 };
enum class TextureKind : int { Solid = 0, Checker = 1, Brick = 2, Noise = 3 };

struct Material {
    Vec3 baseColor{0.8, 0.8, 0.8};
    Vec3 altColor{0.2, 0.2, 0.2};
    TextureKind texture = TextureKind::Solid;
    double texScale = 0.5;  // feature size, object units
    double specular = 0.0;  // Blinn specular weight
    double shininess = 32.0;
};

/// Sizes are half-extents (cube, plane) or radii (sphere/ellipsoid), meters.
/// `rotation` maps object to world; the world frame is the alpha camera
/// frame (x right, y down, z forward).
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Cube;
    Vec3 size{1, 1, 1};
    Vec3 location{0, 0, 5};
    Mat3 rotation = Mat3::identity();
    double bumpAmplitude = 0.0; // shading-normal perturbation (ridges/valleys)
    double bumpScale = 0.5;     // noise feature size
    std::uint64_t noiseSeed = 0;
    Material material;
};

struct DirectionalLight {
    Vec3 direction{0.3, 0.8, 0.2}; // direction the light travels
    double intensity = 1.0;
};

struct Scene {
    std::vector<Primitive> primitives;
    DirectionalLight sun;
    double ambient = 0.25;
    Vec3 background{0.05, 0.06, 0.08};
};

struct SceneGenConfig {
    int complexity = 8;       // primitive count, including backdrop and floor
    double nearDepth = 0.5;   // meters
    double farDepth = 20.0;
    double checkerRatio = 0.25; // texture assignment ratios; remainder solid
    double brickRatio = 0.25;
    double noiseRatio = 0.30;
    bool backdrop = true; // reserve the first two slots for backdrop + floor
};

/// Deterministic scene synthesis: `complexity` primitives with random kinds,
/// poses (depths within [nearDepth, farDepth]), surface perturbation and
/// procedural materials.
Scene generate_scene(std::uint64_t seed, const SceneGenConfig& cfg);
Scene generate_scene(std::uint64_t seed, int complexity);

std::string scene_to_json_text(const Scene& scene);
Scene scene_from_json_text(const std::string& text);
void scene_save(const Scene& scene, const std::string& path);
Scene scene_load(const std::string& path);

/// Rigid motion per primitive: constant linear velocity plus rotation about
/// an axis through the primitive center.
struct Trajectory {
    Vec3 velocity{0, 0, 0};      // m/s
    Vec3 angularAxis{0, 1, 0};
    double angularRate = 0.0;    // rad/s
};

/// Frame f (0-based) is the base scene advanced to t = f / fps. The motion
/// is interpolated from the base pose, not accumulated, so any frame is
/// independent of the others.
std::vector<Scene> animate(const Scene& scene, const std::vector<Trajectory>& trajectories,
                           double fps, int frames);

/// Random trajectories with speeds up to maxSpeed (m/s) / maxSpin (rad/s).
std::vector<Trajectory> random_trajectories(std::uint64_t seed, std::size_t count,
                                            double maxSpeed = 1.0, double maxSpin = 0.8);

/// For each slow-rate frame, the signed time offset (seconds) to the nearest
/// fast-rate frame — the synchronization error of a two-rate rig. Offsets
/// are bounded by half the fast period.
std::vector<double> nearest_frame_offsets(double fastFps, double slowFps, int slowFrames);

} // namespace pat::data
