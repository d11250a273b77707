/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/geom/linalg.hpp"

#include <optional>
#include <string>

namespace pat::geom {

/// Pinhole projection of one world point: pixel position plus camera-frame
/// depth (z along the optical axis, meters).
struct Projection {
    double u = 0, v = 0;
    double depth = 0;
};

/// Calibrated pinhole camera. `rotation` and `translation` map world
/// coordinates into the camera frame: X_cam = R * X_world + t. Units are
/// pixels for intrinsics and meters for translation.
struct CameraModel {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    double skew = 0;
    Mat3 rotation;        // world -> camera
    Vec3 translation{};   // world -> camera
    int width = 1, height = 1;
    int channels = 3;
    std::string label;

    /// Throws std::invalid_argument if the rotation is not orthonormal with
    /// det +1 (1e-9 per entry), or focal lengths / dimensions are invalid.
    void validate() const;

    Mat3 intrinsics() const {
        return Mat3{{fx, skew, cx, 0, fy, cy, 0, 0, 1}};
    }

    /// Camera center in world coordinates: -R^T t.
    Vec3 center() const { return -(rotation.transposed() * translation); }

    Vec3 world_to_camera(const Vec3& p) const { return rotation * p + translation; }

    /// Ray through pixel (u, v): the world point at camera depth d is
    /// center() + d * pixel_ray(u, v). The ray is scaled so that its
    /// camera-frame z component is exactly 1.
    Vec3 pixel_ray(double u, double v) const {
        Vec3 dirCam = intrinsics().inverse() * Vec3{u, v, 1.0};
        return rotation.transposed() * dirCam;
    }

    /// World point of pixel (u, v) at camera-frame depth `d`.
    Vec3 unproject(double u, double v, double d) const {
        return center() + pixel_ray(u, v) * d;
    }

    bool in_image(double u, double v) const {
        return u >= 0 && u <= width - 1 && v >= 0 && v <= height - 1;
    }
};

/// Projects a world point; empty when the point lies at or behind the
/// camera plane (z <= 0).
std::optional<Projection> project_point(const CameraModel& camera, const Vec3& worldPoint);

/// Camera equivalent to cropping a window of `cropWidth` x `cropHeight`
/// pixels at origin (x0, y0) out of `cam`'s image and then downsampling it
/// by the integer factor `scaleDiv` (pixel-center convention: output pixel
/// u'' looks along the same ray as input pixel (u'' + 0.5) * scaleDiv - 0.5
/// + x0). Pose is unchanged. Throws std::invalid_argument when the window
/// leaves the image or the crop is not divisible by scaleDiv.
CameraModel crop_scale_camera(const CameraModel& cam, int x0, int y0, int cropWidth,
                              int cropHeight, int scaleDiv = 1);

/// Calibration file I/O. The format is a JSON object with fields
/// fx, fy, cx, cy, skew, rotation (9 row-major entries), translation (3),
/// width, height, channels, label.
CameraModel load_camera_json(const std::string& path);
CameraModel camera_from_json_text(const std::string& text);
std::string camera_to_json_text(const CameraModel& cam);
void save_camera_json(const CameraModel& cam, const std::string& path);

} // namespace pat::geom
