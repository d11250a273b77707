/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/data/dataset.hpp"

#include "pat/core/rng.hpp"
#include "pat/io/image_io.hpp"
#include "pat/nn/ops.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pat::data {

namespace fs = std::filesystem;

void DatasetConfig::validate() const {
    if (sceneCount < 1) throw std::invalid_argument("dataset: sceneCount must be >= 1");
    if (valSceneCount < 0 || valSceneCount >= sceneCount)
        throw std::invalid_argument("dataset: valSceneCount must be in [0, sceneCount)");
    if (imageWidth < 8 || imageHeight < 8)
        throw std::invalid_argument("dataset: image dimensions too small");
    if (patchesPerScene < 1) throw std::invalid_argument("dataset: patchesPerScene must be >= 1");
    if (cropWidth < 1 || cropHeight < 1 || cropWidth > imageWidth || cropHeight > imageHeight)
        throw std::invalid_argument("dataset: crop window leaves the image");
    if (downsample < 1 || cropWidth % downsample != 0 || cropHeight % downsample != 0)
        throw std::invalid_argument("dataset: downsample must divide the crop dimensions");
    if (patchRfSlots < 2 || frameRfSlots < 2)
        throw std::invalid_argument("dataset: receptive-field slot counts must be >= 2");
    if (sceneComplexity < 1) throw std::invalid_argument("dataset: sceneComplexity must be >= 1");
    if (focalPx <= 0 || baseline <= 0) throw std::invalid_argument("dataset: bad rig parameters");
    if (nearDepth <= 0 || farDepth <= nearDepth)
        throw std::invalid_argument("dataset: bad depth range");
    if (lensRays < 0) throw std::invalid_argument("dataset: lensRays must be >= 0");
}

DatasetConfig desk_dataset_config() { return {}; }

DatasetConfig paper_dataset_config() {
    DatasetConfig cfg;
    cfg.sceneCount = 900;
    cfg.valSceneCount = 100;
    cfg.imageWidth = 2048;
    cfg.imageHeight = 1536;
    cfg.patchesPerScene = 49;
    cfg.cropWidth = 384;
    cfg.cropHeight = 128;
    cfg.downsample = 4;
    cfg.patchRfSlots = 96;
    cfg.frameRfSlots = 96;
    cfg.sceneComplexity = 20;
    cfg.focalPx = 1920.0;
    cfg.baseline = 0.1;
    cfg.nearDepth = 0.9;
    cfg.farDepth = 18.0;
    return cfg;
}

std::string dataset_config_text(const DatasetConfig& cfg) {
    std::ostringstream out;
    out << "scene_count = " << cfg.sceneCount << "\n"
        << "val_scene_count = " << cfg.valSceneCount << "\n"
        << "image_width = " << cfg.imageWidth << "\n"
        << "image_height = " << cfg.imageHeight << "\n"
        << "patches_per_scene = " << cfg.patchesPerScene << "\n"
        << "crop_width = " << cfg.cropWidth << "\n"
        << "crop_height = " << cfg.cropHeight << "\n"
        << "downsample = " << cfg.downsample << "\n"
        << "patch_rf_slots = " << cfg.patchRfSlots << "\n"
        << "frame_rf_slots = " << cfg.frameRfSlots << "\n"
        << "scene_complexity = " << cfg.sceneComplexity << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", cfg.focalPx);
    out << "focal_px = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.baseline);
    out << "baseline = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.nearDepth);
    out << "near_depth = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.farDepth);
    out << "far_depth = " << buf << "\n";
    out << "seed = " << cfg.seed << "\n"
        << "jitter_patches = " << (cfg.jitterPatches ? "true" : "false") << "\n"
        << "lens_rays = " << cfg.lensRays << "\n";
    return out.str();
}

std::vector<std::string> known_dataset_keys() {
    return {"scene_count", "val_scene_count",  "image_width",    "image_height",
            "patches_per_scene", "crop_width", "crop_height",    "downsample",
            "patch_rf_slots", "frame_rf_slots", "scene_complexity", "focal_px",
            "baseline",       "near_depth",    "far_depth",      "seed",
            "jitter_patches", "lens_rays",     "preset"};
}

DatasetConfig dataset_config_from(const KeyValueConfig& kv) {
    DatasetConfig cfg;
    const std::string preset = kv.get_string("preset", "desk");
    if (preset == "paper")
        cfg = paper_dataset_config();
    else if (preset != "desk")
        throw std::invalid_argument("dataset: unknown preset '" + preset + "'");
    cfg.sceneCount = kv.get_int("scene_count", cfg.sceneCount);
    cfg.valSceneCount = kv.get_int("val_scene_count", cfg.valSceneCount);
    cfg.imageWidth = kv.get_int("image_width", cfg.imageWidth);
    cfg.imageHeight = kv.get_int("image_height", cfg.imageHeight);
    cfg.patchesPerScene = kv.get_int("patches_per_scene", cfg.patchesPerScene);
    cfg.cropWidth = kv.get_int("crop_width", cfg.cropWidth);
    cfg.cropHeight = kv.get_int("crop_height", cfg.cropHeight);
    cfg.downsample = kv.get_int("downsample", cfg.downsample);
    cfg.patchRfSlots = std::uint32_t(kv.get_int("patch_rf_slots", int(cfg.patchRfSlots)));
    cfg.frameRfSlots = std::uint32_t(kv.get_int("frame_rf_slots", int(cfg.frameRfSlots)));
    cfg.sceneComplexity = kv.get_int("scene_complexity", cfg.sceneComplexity);
    cfg.focalPx = kv.get_double("focal_px", cfg.focalPx);
    cfg.baseline = kv.get_double("baseline", cfg.baseline);
    cfg.nearDepth = kv.get_double("near_depth", cfg.nearDepth);
    cfg.farDepth = kv.get_double("far_depth", cfg.farDepth);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.jitterPatches = kv.get_bool("jitter_patches", cfg.jitterPatches);
    cfg.lensRays = kv.get_int("lens_rays", cfg.lensRays);
    cfg.validate();
    return cfg;
}

void make_rig(const DatasetConfig& cfg, geom::CameraModel& camA, geom::CameraModel& camB) {
    camA = geom::CameraModel{};
    camA.fx = camA.fy = cfg.focalPx;
    camA.cx = (cfg.imageWidth - 1) * 0.5;
    camA.cy = (cfg.imageHeight - 1) * 0.5;
    camA.width = cfg.imageWidth;
    camA.height = cfg.imageHeight;
    camA.channels = 3;
    camA.label = "alpha";
    camB = camA;
    camB.translation = {-cfg.baseline, 0, 0}; // center at (+baseline, 0, 0)
    camB.label = "beta";
}

std::uint64_t scene_seed(const DatasetConfig& cfg, int sceneIndex) {
    return hash_combine(mix64(cfg.seed), 0x7363656eULL + std::uint64_t(sceneIndex));
}

SceneRender render_scene_pair(const DatasetConfig& cfg, int sceneIndex) {
    cfg.validate();
    SceneGenConfig sc;
    sc.complexity = cfg.sceneComplexity;
    sc.nearDepth = cfg.nearDepth;
    sc.farDepth = cfg.farDepth;
    SceneRender out;
    out.scene = generate_scene(scene_seed(cfg, sceneIndex), sc);
    geom::CameraModel camA, camB;
    make_rig(cfg, camA, camB);
    RenderOptions opt;
    opt.lensRays = cfg.lensRays;
    opt.lensRadius = 0.006;
    opt.focusDepth = 2.0 / (1.0 / cfg.nearDepth + 1.0 / cfg.farDepth);
    opt.seed = scene_seed(cfg, sceneIndex) ^ 0x6c656e73ULL;
    out.camA = render(out.scene, camA, opt);
    out.camB = render(out.scene, camB, opt);
    return out;
}

namespace {

nn::Tensor<float> crop_tensor(const nn::Tensor<float>& img, int x0, int y0, int w, int h) {
    nn::Tensor<float> out(h, w, img.depth);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.depth; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

/// Median stereo disparity over the hit pixels of an alpha-view crop.
double median_disparity(const DatasetConfig& cfg, const RenderOutput& viewA, int x0, int y0) {
    std::vector<double> disp;
    disp.reserve(std::size_t(cfg.cropWidth) * std::size_t(cfg.cropHeight));
    for (int y = y0; y < y0 + cfg.cropHeight; ++y)
        for (int x = x0; x < x0 + cfg.cropWidth; ++x) {
            if (!viewA.hit[std::size_t(y) * std::size_t(cfg.imageWidth) + std::size_t(x)])
                continue;
            const double z = viewA.depth.at(y, x, 0);
            if (z > 0) disp.push_back(cfg.focalPx * cfg.baseline / z);
        }
    if (disp.empty()) return cfg.focalPx * cfg.baseline / cfg.farDepth;
    auto mid = disp.begin() + std::ptrdiff_t(disp.size() / 2);
    std::nth_element(disp.begin(), mid, disp.end());
    return *mid;
}

/// Jittered-grid crop origins (full resolution, alpha view).
std::vector<std::pair<int, int>> patch_origins(const DatasetConfig& cfg, std::uint64_t seed) {
    const int usableW = cfg.imageWidth - cfg.cropWidth;   // inclusive origin range
    const int usableH = cfg.imageHeight - cfg.cropHeight;
    const int P = cfg.patchesPerScene;
    int gy = std::max(1, int(std::lround(std::sqrt(double(P) * (usableH + 1) /
                                                   double(usableW + 1)))));
    gy = std::min(gy, P);
    const int gx = (P + gy - 1) / gy;
    const double cellW = double(usableW + 1) / gx;
    const double cellH = double(usableH + 1) / gy;
    Rng rng(hash_combine(seed, 0x70617463ULL));
    std::vector<std::pair<int, int>> out;
    out.reserve(std::size_t(P));
    for (int j = 0; j < gy && int(out.size()) < P; ++j)
        for (int i = 0; i < gx && int(out.size()) < P; ++i) {
            const double ux = cfg.jitterPatches ? rng.uniform() : 0.5;
            const double uy = cfg.jitterPatches ? rng.uniform() : 0.5;
            const int x0 = std::clamp(int(std::floor((i + ux) * cellW)), 0, usableW);
            const int y0 = std::clamp(int(std::floor((j + uy) * cellH)), 0, usableH);
            out.emplace_back(x0, y0);
        }
    return out;
}

FusionSample make_sample(const DatasetConfig& cfg, const SceneRender& sr,
                         const geom::CameraModel& camA, const geom::CameraModel& camB,
                         int sceneIndex, int x0, int y0) {
    const int k = cfg.downsample;
    const double med = median_disparity(cfg, sr.camA, x0, y0);
    const int bx0 = std::clamp(x0 - int(std::lround(med)), 0, cfg.imageWidth - cfg.cropWidth);
    const int by0 = y0;

    FusionSample s;
    s.sceneId = std::uint32_t(sceneIndex);
    s.patchX = std::uint32_t(x0);
    s.patchY = std::uint32_t(y0);
    s.alpha = nn::clamp01(nn::bicubic_resample(
        crop_tensor(sr.camA.color, x0, y0, cfg.cropWidth, cfg.cropHeight), cfg.patch_width(),
        cfg.patch_height()));
    s.beta = nn::clamp01(nn::bicubic_resample(
        crop_tensor(sr.camB.color, bx0, by0, cfg.cropWidth, cfg.cropHeight), cfg.patch_width(),
        cfg.patch_height()));
    const geom::CameraModel cropA =
        geom::crop_scale_camera(camA, x0, y0, cfg.cropWidth, cfg.cropHeight, k);
    const geom::CameraModel cropB =
        geom::crop_scale_camera(camB, bx0, by0, cfg.cropWidth, cfg.cropHeight, k);
    s.rfs.push_back(geom::epipolar_rf(cropA, cropB, cfg.patchRfSlots, cfg.rf_range()));
    return s;
}

std::string scene_dir_name(int sceneIndex) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", sceneIndex);
    return buf;
}

std::string sample_file_name(int sampleIndex) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d.bin", sampleIndex);
    return buf;
}

void write_manifest(const DatasetConfig& cfg, const geom::CameraModel& camA,
                    const geom::CameraModel& camB, int sampleCount, int trainSampleCount,
                    const fs::path& dir) {
    const std::string text = dataset_config_text(cfg);
    nlohmann::json j;
    j["kind"] = "pat-dataset";
    j["version"] = 1;
    j["seed"] = cfg.seed;
    j["config_hash"] = config_hash(text);
    j["config_text"] = text;
    j["cameras"] = {{"camA", nlohmann::json::parse(geom::camera_to_json_text(camA))},
                    {"camB", nlohmann::json::parse(geom::camera_to_json_text(camB))}};
    j["scene_count"] = cfg.sceneCount;
    j["val_scene_count"] = cfg.valSceneCount;
    j["patches_per_scene"] = cfg.patchesPerScene;
    j["sample_count"] = sampleCount;
    j["train_sample_count"] = trainSampleCount;
    j["formats"] = {{"sample", "PATDS1"},
                    {"rf", "PATRF1"},
                    {"depth", "PATIMG1"},
                    {"checkpoint", "PATCKPT1"}};
    std::ofstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("dataset: cannot write manifest.json");
    f << j.dump(2) << '\n';
}

} // namespace

BuiltDataset build_dataset(const DatasetConfig& cfg, const std::string& outDir) {
    cfg.validate();
    BuiltDataset ds;
    ds.config = cfg;
    make_rig(cfg, ds.camA, ds.camB);

    const bool emit = !outDir.empty();
    fs::path root(outDir);
    if (emit) {
        fs::create_directories(root / "scenes");
        fs::create_directories(root / "samples");
    }

    const int trainScenes = cfg.sceneCount - cfg.valSceneCount;
    int sampleIndex = 0;
    // Scenes are processed in index order so dataset assembly is a
    // deterministic reduce; the renderer parallelizes internally over rows.
    for (int si = 0; si < cfg.sceneCount; ++si) {
        const SceneRender sr = render_scene_pair(cfg, si);
        if (emit) {
            const fs::path sceneDir = root / "scenes" / scene_dir_name(si);
            fs::create_directories(sceneDir);
            io::save_png(sr.camA.color, (sceneDir / "camA.png").string());
            io::save_png(sr.camB.color, (sceneDir / "camB.png").string());
            io::save_float_image(sr.camA.depth, (sceneDir / "camA.depth").string());
            io::save_float_image(sr.camB.depth, (sceneDir / "camB.depth").string());
            scene_save(sr.scene, (sceneDir / "scene.json").string());
        }
        for (const auto& [x0, y0] : patch_origins(cfg, scene_seed(cfg, si))) {
            FusionSample s = make_sample(cfg, sr, ds.camA, ds.camB, si, x0, y0);
            if (emit) sample_save(s, (root / "samples" / sample_file_name(sampleIndex)).string());
            (si < trainScenes ? ds.train : ds.val).push_back(std::move(s));
            ++sampleIndex;
        }
    }
    if (emit)
        write_manifest(cfg, ds.camA, ds.camB, sampleIndex, int(ds.train.size()), root);
    return ds;
}

DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("dataset: cannot open manifest.json in " + dir);
    nlohmann::json j;
    f >> j;
    if (j.value("kind", std::string{}) != "pat-dataset")
        throw std::runtime_error("dataset: not a dataset manifest: " + dir);
    DatasetManifest m;
    m.config = dataset_config_from(KeyValueConfig::parse(j.at("config_text").get<std::string>()));
    m.configHash = j.at("config_hash").get<std::string>();
    m.camA = geom::camera_from_json_text(j.at("cameras").at("camA").dump());
    m.camB = geom::camera_from_json_text(j.at("cameras").at("camB").dump());
    m.sampleCount = j.at("sample_count").get<int>();
    m.trainSampleCount = j.at("train_sample_count").get<int>();
    return m;
}

BuiltDataset load_dataset(const std::string& dir) {
    const DatasetManifest m = load_manifest(dir);
    BuiltDataset ds;
    ds.config = m.config;
    ds.camA = m.camA;
    ds.camB = m.camB;
    for (int i = 0; i < m.sampleCount; ++i) {
        FusionSample s = sample_load((fs::path(dir) / "samples" / sample_file_name(i)).string());
        (i < m.trainSampleCount ? ds.train : ds.val).push_back(std::move(s));
    }
    return ds;
}

} // namespace pat::data
