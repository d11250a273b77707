/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/geom/camera.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pat::geom {

void CameraModel::validate() const {
    if (!(fx > 0) || !(fy > 0))
        throw std::invalid_argument("CameraModel: focal lengths must be positive");
    if (width < 1 || height < 1)
        throw std::invalid_argument("CameraModel: image dimensions must be >= 1");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("CameraModel: channels must be 1 or 3");

    const Mat3 rtr = rotation.transposed() * rotation;
    const Mat3 eye = Mat3::identity();
    for (int i = 0; i < 9; ++i) {
        if (std::abs(rtr.m[i] - eye.m[i]) > 1e-9)
            throw std::invalid_argument("CameraModel: rotation is not orthonormal");
    }
    if (std::abs(rotation.det() - 1.0) > 1e-9)
        throw std::invalid_argument("CameraModel: rotation determinant is not +1");
}

std::optional<Projection> project_point(const CameraModel& camera, const Vec3& worldPoint) {
    const Vec3 p = camera.world_to_camera(worldPoint);
    if (p.z <= 0) return std::nullopt;
    Projection out;
    out.u = camera.fx * p.x / p.z + camera.skew * p.y / p.z + camera.cx;
    out.v = camera.fy * p.y / p.z + camera.cy;
    out.depth = p.z;
    return out;
}

CameraModel crop_scale_camera(const CameraModel& cam, int x0, int y0, int cropWidth,
                              int cropHeight, int scaleDiv) {
    if (scaleDiv < 1) throw std::invalid_argument("crop_scale_camera: scaleDiv must be >= 1");
    if (cropWidth < 1 || cropHeight < 1 || x0 < 0 || y0 < 0 || x0 + cropWidth > cam.width ||
        y0 + cropHeight > cam.height)
        throw std::invalid_argument("crop_scale_camera: window leaves the image");
    if (cropWidth % scaleDiv != 0 || cropHeight % scaleDiv != 0)
        throw std::invalid_argument("crop_scale_camera: crop not divisible by scaleDiv");
    CameraModel out = cam;
    const double k = double(scaleDiv);
    out.fx = cam.fx / k;
    out.fy = cam.fy / k;
    out.skew = cam.skew / k;
    out.cx = (cam.cx - x0 + 0.5) / k - 0.5;
    out.cy = (cam.cy - y0 + 0.5) / k - 0.5;
    out.width = cropWidth / scaleDiv;
    out.height = cropHeight / scaleDiv;
    return out;
}

namespace {

using nlohmann::json;

CameraModel from_json(const json& j) {
    CameraModel cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.skew = j.value("skew", 0.0);
    auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw std::runtime_error("calibration: rotation must have 9 entries");
    std::copy(rot.begin(), rot.end(), cam.rotation.m.begin());
    auto t = j.at("translation").get<std::vector<double>>();
    if (t.size() != 3) throw std::runtime_error("calibration: translation must have 3 entries");
    cam.translation = {t[0], t[1], t[2]};
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.channels = j.value("channels", 3);
    cam.label = j.value("label", std::string{});
    cam.validate();
    return cam;
}

json to_json(const CameraModel& cam) {
    json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["skew"] = cam.skew;
    j["rotation"] = std::vector<double>(cam.rotation.m.begin(), cam.rotation.m.end());
    j["translation"] = std::vector<double>{cam.translation.x, cam.translation.y, cam.translation.z};
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["channels"] = cam.channels;
    j["label"] = cam.label;
    return j;
}

} // namespace

CameraModel camera_from_json_text(const std::string& text) {
    return from_json(json::parse(text));
}

std::string camera_to_json_text(const CameraModel& cam) {
    return to_json(cam).dump(2);
}

CameraModel load_camera_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return camera_from_json_text(ss.str());
}

void save_camera_json(const CameraModel& cam, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration file: " + path);
    out << camera_to_json_text(cam) << "\n";
}

} // namespace pat::geom
