/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/data/render.hpp"

#include "pat/core/parallel.hpp"
#include "pat/core/rng.hpp"
#include "pat/data/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pat::data {

namespace {

constexpr double kTau = 6.28318530717958647692;

struct LocalHit {
    double t;
    Vec3 normal; // object frame
};

// Finite rectangle in the local z = 0 plane, |x| <= size.x, |y| <= size.y.
// Two-sided.
std::optional<LocalHit> hit_plane(const Vec3& o, const Vec3& d, const Vec3& size, double tMin,
                                  double tMax) {
    if (std::abs(d.z) < 1e-12) return std::nullopt;
    const double t = -o.z / d.z;
    if (t <= tMin || t >= tMax) return std::nullopt;
    const double x = o.x + t * d.x, y = o.y + t * d.y;
    if (std::abs(x) > size.x || std::abs(y) > size.y) return std::nullopt;
    return LocalHit{t, {0, 0, o.z > 0 ? 1.0 : -1.0}};
}

// Axis-aligned box with half-extents `size`, slab method.
std::optional<LocalHit> hit_cube(const Vec3& o, const Vec3& d, const Vec3& size, double tMin,
                                 double tMax) {
    double tLo = tMin, tHi = tMax;
    int axisLo = -1;
    double signLo = 1.0;
    const double os[3] = {o.x, o.y, o.z};
    const double ds[3] = {d.x, d.y, d.z};
    const double hs[3] = {size.x, size.y, size.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(ds[a]) < 1e-12) {
            if (std::abs(os[a]) > hs[a]) return std::nullopt;
            continue;
        }
        const double inv = 1.0 / ds[a];
        double t0 = (-hs[a] - os[a]) * inv;
        double t1 = (hs[a] - os[a]) * inv;
        double sign = -1.0; // entering from the -extent face
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1.0;
        }
        if (t0 > tLo) {
            tLo = t0;
            axisLo = a;
            signLo = sign;
        }
        tHi = std::min(tHi, t1);
        if (tLo > tHi) return std::nullopt;
    }
    if (axisLo < 0) return std::nullopt; // origin inside the box
    Vec3 n{0, 0, 0};
    if (axisLo == 0) n.x = signLo;
    if (axisLo == 1) n.y = signLo;
    if (axisLo == 2) n.z = signLo;
    return LocalHit{tLo, n};
}

// Ellipsoid with semi-axes `size`. Scaling coordinates per axis keeps the
// ray parameter unchanged, so t remains a world/camera depth.
std::optional<LocalHit> hit_sphere(const Vec3& o, const Vec3& d, const Vec3& size, double tMin,
                                   double tMax) {
    const Vec3 os{o.x / size.x, o.y / size.y, o.z / size.z};
    const Vec3 ds{d.x / size.x, d.y / size.y, d.z / size.z};
    const double a = ds.dot(ds);
    const double b = os.dot(ds);
    const double c = os.dot(os) - 1.0;
    const double disc = b * b - a * c;
    if (disc < 0 || a == 0) return std::nullopt;
    const double root = std::sqrt(disc);
    double t = (-b - root) / a;
    if (t <= tMin) t = (-b + root) / a;
    if (t <= tMin || t >= tMax) return std::nullopt;
    const Vec3 p = o + d * t;
    Vec3 n{p.x / (size.x * size.x), p.y / (size.y * size.y), p.z / (size.z * size.z)};
    return LocalHit{t, n.normalized()};
}

Vec3 texture_color(const Primitive& prim, const Vec3& local) {
    const Material& m = prim.material;
    const double s = std::max(m.texScale, 1e-6);
    switch (m.texture) {
    case TextureKind::Solid:
        return m.baseColor;
    case TextureKind::Checker: {
        const std::int64_t px = std::int64_t(std::floor(local.x / s));
        const std::int64_t py = std::int64_t(std::floor(local.y / s));
        const std::int64_t pz = std::int64_t(std::floor(local.z / s));
        return ((px + py + pz) & 1) ? m.altColor : m.baseColor;
    }
    case TextureKind::Brick: {
        const double rowF = local.y / s;
        const std::int64_t row = std::int64_t(std::floor(rowF));
        const double colF = local.x / (2.0 * s) + ((row & 1) ? 0.5 : 0.0);
        const std::int64_t col = std::int64_t(std::floor(colF));
        const double fy = rowF - std::floor(rowF);
        const double fx = colF - std::floor(colF);
        if (fy < 0.08 || fx < 0.05) return m.altColor; // mortar
        const std::uint64_t h =
            hash_combine(prim.noiseSeed, hash_combine(std::uint64_t(row), std::uint64_t(col)));
        const double v = 0.85 + 0.15 * double(h >> 11) * 0x1.0p-53; // per-brick variation
        return m.baseColor * v;
    }
    case TextureKind::Noise: {
        const double v = 0.5 + 0.5 * value_noise3(local * (1.0 / s), prim.noiseSeed);
        return m.baseColor * (1.0 - v) + m.altColor * v;
    }
    }
    return m.baseColor;
}

// Shading normal: geometric normal tilted by the tangential component of the
// bump-field gradient. Geometry (and therefore depth) is untouched.
Vec3 shading_normal(const Primitive& prim, const Vec3& localPoint, const Vec3& worldNormal) {
    if (prim.bumpAmplitude == 0.0) return worldNormal;
    const double s = std::max(prim.bumpScale, 1e-6);
    const Vec3 gLocal = value_noise3_grad(localPoint * (1.0 / s), prim.noiseSeed);
    const Vec3 g = prim.rotation * gLocal;
    const Vec3 tangential = g - worldNormal * worldNormal.dot(g);
    // Slope of the height field amplitude * noise(p / scale).
    Vec3 n = worldNormal - tangential * (prim.bumpAmplitude / s);
    const double len = std::sqrt(n.dot(n));
    return len > 1e-12 ? n * (1.0 / len) : worldNormal;
}

Vec3 shade(const Scene& scene, const Vec3& rayDir, const RayHit& hit) {
    const Primitive& prim = scene.primitives[hit.primitive];
    const Vec3 local = prim.rotation.transposed() * (hit.point - prim.location);
    const Vec3 albedo = texture_color(prim, local);
    const Vec3 n = shading_normal(prim, local, hit.normal);

    const Vec3 toLight = (scene.sun.direction * -1.0).normalized();
    double diffuse = std::max(0.0, n.dot(toLight));
    double specular = 0.0;
    if (diffuse > 0) {
        const Vec3 shadowOrigin = hit.point + hit.normal * 1e-4;
        if (trace(scene, shadowOrigin, toLight, 1e-6, 1e30)) {
            diffuse = 0.0;
        } else if (prim.material.specular > 0) {
            const Vec3 view = (rayDir * -1.0).normalized();
            const Vec3 half = (toLight + view).normalized();
            specular = prim.material.specular *
                       std::pow(std::max(0.0, n.dot(half)), prim.material.shininess);
        }
    }
    const double lit = scene.sun.intensity;
    Vec3 c = albedo * (scene.ambient + lit * diffuse) + Vec3{1, 1, 1} * (lit * specular);
    return {std::clamp(c.x, 0.0, 1.0), std::clamp(c.y, 0.0, 1.0), std::clamp(c.z, 0.0, 1.0)};
}

} // namespace

std::optional<RayHit> trace(const Scene& scene, const Vec3& origin, const Vec3& dir, double tMin,
                            double tMax) {
    std::optional<RayHit> best;
    double closest = tMax;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const Primitive& prim = scene.primitives[i];
        const Mat3 worldToObj = prim.rotation.transposed();
        const Vec3 o = worldToObj * (origin - prim.location);
        const Vec3 d = worldToObj * dir;
        std::optional<LocalHit> lh;
        switch (prim.kind) {
        case PrimitiveKind::Plane: lh = hit_plane(o, d, prim.size, tMin, closest); break;
        case PrimitiveKind::Cube: lh = hit_cube(o, d, prim.size, tMin, closest); break;
        case PrimitiveKind::Sphere: lh = hit_sphere(o, d, prim.size, tMin, closest); break;
        }
        if (!lh) continue;
        closest = lh->t;
        RayHit h;
        h.t = lh->t;
        h.point = origin + dir * lh->t;
        h.normal = prim.rotation * lh->normal;
        if (h.normal.dot(dir) > 0) h.normal = h.normal * -1.0;
        h.primitive = i;
        best = h;
    }
    return best;
}

RenderOutput render(const Scene& scene, const geom::CameraModel& camera,
                    const RenderOptions& options) {
    camera.validate();
    if (options.lensRays < 0) throw std::invalid_argument("render: lensRays must be >= 0");
    if (options.lensRays > 0 && options.focusDepth <= 0)
        throw std::invalid_argument("render: focusDepth must be positive");

    const int W = camera.width, H = camera.height;
    RenderOutput out;
    out.color = nn::Tensor<float>(H, W, 3);
    out.depth = nn::Tensor<float>(H, W, 1);
    out.hit.assign(std::size_t(H) * std::size_t(W), 0);

    const Vec3 center = camera.center();
    const Mat3 camToWorld = camera.rotation.transposed();

    parallel_for(0, std::size_t(H), [&](std::size_t row) {
        const int y = int(row);
        for (int x = 0; x < W; ++x) {
            const Vec3 dir = camera.pixel_ray(double(x), double(y)); // camera z = 1
            const auto hit = trace(scene, center, dir);
            Vec3 c = scene.background;
            if (hit) {
                out.hit[row * std::size_t(W) + std::size_t(x)] = 1;
                out.depth.at(y, x, 0) = float(hit->t);
                c = shade(scene, dir, *hit);
            }
            if (options.lensRays > 0) {
                // Thin lens: average over aperture samples focused at
                // options.focusDepth. The central ray above still defines
                // depth and the hit flag.
                Rng rng(hash_combine(options.seed, std::uint64_t(row) * 0x1f123bb5 +
                                                       std::uint64_t(x)));
                Vec3 acc = c;
                const Vec3 focus = center + dir * options.focusDepth;
                for (int k = 0; k < options.lensRays; ++k) {
                    const double r = options.lensRadius * std::sqrt(rng.uniform());
                    const double phi = rng.uniform() * kTau;
                    const Vec3 offset =
                        camToWorld * Vec3{r * std::cos(phi), r * std::sin(phi), 0.0};
                    const Vec3 o = center + offset;
                    const Vec3 d = (focus - o) * (1.0 / options.focusDepth);
                    const auto lensHit = trace(scene, o, d);
                    acc = acc + (lensHit ? shade(scene, d, *lensHit) : scene.background);
                }
                c = acc * (1.0 / double(options.lensRays + 1));
            }
            out.color.at(y, x, 0) = float(c.x);
            out.color.at(y, x, 1) = float(c.y);
            out.color.at(y, x, 2) = float(c.z);
        }
    });
    return out;
}

} // namespace pat::data
