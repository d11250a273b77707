/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/config.hpp"
#include "pat/data/render.hpp"
#include "pat/data/sample.hpp"
#include "pat/data/scene.hpp"
#include "pat/geom/epipolar.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pat::data {

/// Generation parameters. The defaults are the desk-scale preset: a full
/// build plus a training run fits in minutes on one CPU core. The paper
/// preset (paper_dataset_config) keeps the published operating points and
/// is practical only as a long batch job.
struct DatasetConfig {
    int sceneCount = 32;
    int valSceneCount = 8; // tail scenes form the validation split
    int imageWidth = 256, imageHeight = 192;
    int patchesPerScene = 8;
    int cropWidth = 128, cropHeight = 64; // pre-downsample patch window
    int downsample = 2;                   // bicubic reduction factor
    std::uint32_t patchRfSlots = 33;      // RF length n at patch scale
    std::uint32_t frameRfSlots = 48;      // RF length n for whole-frame eval
    int sceneComplexity = 10;
    double focalPx = 240.0; // fx = fy at full resolution
    double baseline = 0.08; // camera separation along +x, meters
    double nearDepth = 0.9, farDepth = 18.0;
    std::uint64_t seed = 1;
    bool jitterPatches = true; // jittered grid vs plain grid centers
    int lensRays = 0;          // thin-lens defocus samples; 0 = pinhole

    void validate() const;
    int patch_width() const { return cropWidth / downsample; }
    int patch_height() const { return cropHeight / downsample; }
    geom::DepthRange rf_range() const { return {nearDepth * 0.9, farDepth}; }
};

DatasetConfig desk_dataset_config();
DatasetConfig paper_dataset_config();

/// Canonical key=value form; its hash identifies the generation run.
std::string dataset_config_text(const DatasetConfig& cfg);
DatasetConfig dataset_config_from(const KeyValueConfig& kv);
std::vector<std::string> known_dataset_keys();

/// The two-camera rig: camA (alpha, at the origin looking down +z) and camB
/// (beta, displaced by cfg.baseline along +x, same orientation/intrinsics).
void make_rig(const DatasetConfig& cfg, geom::CameraModel& camA, geom::CameraModel& camB);

/// One scene rendered from both cameras.
struct SceneRender {
    Scene scene;
    RenderOutput camA, camB;
};

SceneRender render_scene_pair(const DatasetConfig& cfg, int sceneIndex);

/// Deterministic per-scene generation seed.
std::uint64_t scene_seed(const DatasetConfig& cfg, int sceneIndex);

struct BuiltDataset {
    std::vector<FusionSample> train, val;
    geom::CameraModel camA, camB;
    DatasetConfig config;
};

/// Renders every scene, extracts jittered-grid patch pairs with their
/// receptive-field maps, and (when outDir is non-empty) writes the artifact
/// tree:
///   manifest.json
///   scenes/<id>/camA.png camB.png camA.depth camB.depth scene.json
///   samples/<id>.bin
/// Fully deterministic for a given config, including file bytes.
BuiltDataset build_dataset(const DatasetConfig& cfg, const std::string& outDir = {});

/// Reads a dataset tree produced by build_dataset.
BuiltDataset load_dataset(const std::string& dir);

/// Parsed manifest.json, for consumers that only need metadata.
struct DatasetManifest {
    DatasetConfig config;
    std::string configHash;
    geom::CameraModel camA, camB;
    int sampleCount = 0, trainSampleCount = 0;
};

DatasetManifest load_manifest(const std::string& dir);

} // namespace pat::data
