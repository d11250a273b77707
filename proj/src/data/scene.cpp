/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/data/scene.hpp"

#include "pat/core/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pat::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 hsv_color(double h, double s, double v) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

Material random_material(Rng& rng, const SceneGenConfig& cfg) {
    Material mat;
    const double hue = rng.uniform();
    mat.baseColor = hsv_color(hue, rng.uniform(0.35, 0.95), rng.uniform(0.45, 0.95));
    mat.altColor = hsv_color(std::fmod(hue + rng.uniform(0.25, 0.75), 1.0),
                             rng.uniform(0.35, 0.95), rng.uniform(0.25, 0.9));
    const double u = rng.uniform();
    if (u < cfg.checkerRatio)
        mat.texture = TextureKind::Checker;
    else if (u < cfg.checkerRatio + cfg.brickRatio)
        mat.texture = TextureKind::Brick;
    else if (u < cfg.checkerRatio + cfg.brickRatio + cfg.noiseRatio)
        mat.texture = TextureKind::Noise;
    else
        mat.texture = TextureKind::Solid;
    mat.texScale = rng.uniform(0.15, 0.8);
    mat.specular = rng.uniform(0.0, 0.35);
    mat.shininess = rng.uniform(8.0, 64.0);
    return mat;
}

} // namespace

Scene generate_scene(std::uint64_t seed, const SceneGenConfig& cfg) {
    if (cfg.complexity < 1) throw std::invalid_argument("generate_scene: complexity must be >= 1");
    if (cfg.nearDepth <= 0 || cfg.farDepth <= cfg.nearDepth)
        throw std::invalid_argument("generate_scene: bad depth range");
    Rng rng(mix64(seed));
    Scene scene;
    scene.ambient = rng.uniform(0.18, 0.32);
    scene.background = {rng.uniform(0.02, 0.08), rng.uniform(0.03, 0.09), rng.uniform(0.05, 0.12)};
    scene.sun.direction =
        Vec3{rng.uniform(-0.5, 0.5), rng.uniform(0.4, 0.9), rng.uniform(0.1, 0.6)}.normalized();
    scene.sun.intensity = rng.uniform(0.8, 1.1);

    int remaining = cfg.complexity;

    if (cfg.backdrop && remaining > 0) {
        // Wall facing the rig near the far bound.
        Primitive wall;
        wall.kind = PrimitiveKind::Plane;
        const double z = cfg.farDepth * 0.95;
        wall.size = {z * 0.8, z * 0.6, 1.0};
        wall.location = {0, 0, z};
        wall.rotation = Mat3::identity(); // local +z normal faces the camera (two-sided)
        wall.material = random_material(rng, cfg);
        wall.material.texScale = rng.uniform(0.8, 2.5);
        wall.bumpAmplitude = rng.uniform(0.0, 0.1);
        wall.bumpScale = rng.uniform(0.5, 2.0);
        wall.noiseSeed = rng.next_u64();
        scene.primitives.push_back(wall);
        --remaining;
    }
    if (cfg.backdrop && remaining > 0) {
        // Floor below the rig (y points down).
        Primitive floor;
        floor.kind = PrimitiveKind::Plane;
        const double mid = 0.5 * (cfg.nearDepth + cfg.farDepth);
        floor.size = {cfg.farDepth, cfg.farDepth * 0.6, 1.0};
        floor.location = {0, 2.0, mid};
        floor.rotation = geom::axis_angle({1, 0, 0}, -kPi / 2); // local +z points up (-y)
        floor.material = random_material(rng, cfg);
        floor.material.texScale = rng.uniform(0.6, 1.6);
        floor.noiseSeed = rng.next_u64();
        scene.primitives.push_back(floor);
        --remaining;
    }

    for (int i = 0; i < remaining; ++i) {
        Primitive p;
        const double kindDraw = rng.uniform();
        p.kind = kindDraw < 0.3 ? PrimitiveKind::Plane
                                : (kindDraw < 0.65 ? PrimitiveKind::Cube : PrimitiveKind::Sphere);
        const double scale = rng.uniform(0.25, 1.2);
        p.size = {scale * rng.uniform(0.6, 1.4), scale * rng.uniform(0.6, 1.4),
                  scale * rng.uniform(0.6, 1.4)};
        // Keep every point of the primitive inside [nearDepth, 0.9*farDepth]
        // regardless of rotation: budget the farthest corner from the center.
        const double reach = std::sqrt(p.size.dot(p.size));
        const double zLo = cfg.nearDepth + reach;
        const double zHi = std::max(zLo, cfg.farDepth * 0.9 - reach);
        // Depth biased toward the near half so foreground structure dominates.
        const double t = rng.uniform();
        const double z = zLo + (zHi - zLo) * t * t;
        p.location = {rng.uniform(-0.45, 0.45) * z, rng.uniform(-0.35, 0.35) * z, z};
        p.rotation = geom::rotation_xyz(rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi),
                                        rng.uniform(-kPi, kPi));
        const double minSize = std::min({p.size.x, p.size.y, p.size.z});
        p.bumpAmplitude = rng.uniform(0.0, 0.1) * minSize;
        p.bumpScale = rng.uniform(0.3, 1.5);
        p.noiseSeed = rng.next_u64();
        p.material = random_material(rng, cfg);
        scene.primitives.push_back(p);
    }
    return scene;
}

Scene generate_scene(std::uint64_t seed, int complexity) {
    SceneGenConfig cfg;
    cfg.complexity = complexity;
    return generate_scene(seed, cfg);
}

// --- JSON ------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("scene: expected 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json mat_json(const Mat3& m) {
    nlohmann::json a = nlohmann::json::array();
    for (double v : m.m) a.push_back(v);
    return a;
}

Mat3 mat_from(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 9) throw std::runtime_error("scene: expected 9-matrix");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m.m[std::size_t(i)] = j[std::size_t(i)].get<double>();
    return m;
}

} // namespace

std::string scene_to_json_text(const Scene& scene) {
    nlohmann::json j;
    j["ambient"] = scene.ambient;
    j["background"] = vec_json(scene.background);
    j["sun"] = {{"direction", vec_json(scene.sun.direction)}, {"intensity", scene.sun.intensity}};
    j["primitives"] = nlohmann::json::array();
    for (const Primitive& p : scene.primitives) {
        nlohmann::json pj;
        pj["kind"] = int(p.kind);
        pj["size"] = vec_json(p.size);
        pj["location"] = vec_json(p.location);
        pj["rotation"] = mat_json(p.rotation);
        pj["bump_amplitude"] = p.bumpAmplitude;
        pj["bump_scale"] = p.bumpScale;
        pj["noise_seed"] = p.noiseSeed;
        pj["material"] = {{"base_color", vec_json(p.material.baseColor)},
                          {"alt_color", vec_json(p.material.altColor)},
                          {"texture", int(p.material.texture)},
                          {"tex_scale", p.material.texScale},
                          {"specular", p.material.specular},
                          {"shininess", p.material.shininess}};
        j["primitives"].push_back(pj);
    }
    return j.dump(2);
}

Scene scene_from_json_text(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    Scene scene;
    scene.ambient = j.at("ambient").get<double>();
    scene.background = vec_from(j.at("background"));
    scene.sun.direction = vec_from(j.at("sun").at("direction"));
    scene.sun.intensity = j.at("sun").at("intensity").get<double>();
    for (const auto& pj : j.at("primitives")) {
        Primitive p;
        const int kind = pj.at("kind").get<int>();
        if (kind < 0 || kind > 2) throw std::runtime_error("scene: unknown primitive kind");
        p.kind = PrimitiveKind(kind);
        p.size = vec_from(pj.at("size"));
        p.location = vec_from(pj.at("location"));
        p.rotation = mat_from(pj.at("rotation"));
        p.bumpAmplitude = pj.at("bump_amplitude").get<double>();
        p.bumpScale = pj.at("bump_scale").get<double>();
        p.noiseSeed = pj.at("noise_seed").get<std::uint64_t>();
        const auto& mj = pj.at("material");
        p.material.baseColor = vec_from(mj.at("base_color"));
        p.material.altColor = vec_from(mj.at("alt_color"));
        const int tex = mj.at("texture").get<int>();
        if (tex < 0 || tex > 3) throw std::runtime_error("scene: unknown texture kind");
        p.material.texture = TextureKind(tex);
        p.material.texScale = mj.at("tex_scale").get<double>();
        p.material.specular = mj.at("specular").get<double>();
        p.material.shininess = mj.at("shininess").get<double>();
        scene.primitives.push_back(p);
    }
    return scene;
}

void scene_save(const Scene& scene, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("scene: cannot open for writing: " + path);
    f << scene_to_json_text(scene) << '\n';
}

Scene scene_load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("scene: cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return scene_from_json_text(text);
}

// --- animation ---------------------------------------------------------------

std::vector<Scene> animate(const Scene& scene, const std::vector<Trajectory>& trajectories,
                           double fps, int frames) {
    if (fps <= 0) throw std::invalid_argument("animate: fps must be positive");
    if (frames < 0) throw std::invalid_argument("animate: frame count must be >= 0");
    if (trajectories.size() != scene.primitives.size())
        throw std::invalid_argument("animate: one trajectory per primitive required");
    std::vector<Scene> out;
    out.reserve(std::size_t(frames));
    for (int f = 0; f < frames; ++f) {
        const double t = double(f) / fps;
        Scene frame = scene;
        for (std::size_t i = 0; i < frame.primitives.size(); ++i) {
            const Trajectory& tr = trajectories[i];
            Primitive& p = frame.primitives[i];
            p.location = p.location + tr.velocity * t;
            if (tr.angularRate != 0.0)
                p.rotation = geom::axis_angle(tr.angularAxis, tr.angularRate * t) * p.rotation;
        }
        out.push_back(std::move(frame));
    }
    return out;
}

std::vector<Trajectory> random_trajectories(std::uint64_t seed, std::size_t count,
                                            double maxSpeed, double maxSpin) {
    Rng rng(mix64(seed));
    std::vector<Trajectory> out(count);
    for (auto& tr : out) {
        tr.velocity = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)} *
                      (maxSpeed * rng.uniform());
        tr.angularAxis =
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}.normalized();
        if (tr.angularAxis.dot(tr.angularAxis) == 0) tr.angularAxis = {0, 1, 0};
        tr.angularRate = maxSpin * rng.uniform(-1.0, 1.0);
    }
    return out;
}

std::vector<double> nearest_frame_offsets(double fastFps, double slowFps, int slowFrames) {
    if (fastFps <= 0 || slowFps <= 0) throw std::invalid_argument("frame offsets: fps > 0");
    std::vector<double> out;
    out.reserve(std::size_t(slowFrames));
    const double fastPeriod = 1.0 / fastFps;
    for (int f = 0; f < slowFrames; ++f) {
        const double t = double(f) / slowFps;
        const double nearest = std::round(t / fastPeriod) * fastPeriod;
        out.push_back(nearest - t);
    }
    return out;
}

} // namespace pat::data
