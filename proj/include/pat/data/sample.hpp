/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/geom/receptive_field.hpp"
#include "pat/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pat::data {

/// One training/validation sample: the ground-truth alpha patch, the beta
/// patch, and the receptive-field map(s) tying them together.
struct FusionSample {
    nn::Tensor<float> alpha; // ground truth, [0,1] RGB
    nn::Tensor<float> beta;  // beta-view patch, [0,1] RGB
    std::vector<geom::ReceptiveFieldMap> rfs;
    std::uint32_t sceneId = 0;
    std::uint32_t patchX = 0, patchY = 0;
};

/// Binary layout: magic "PATDS1\0\0", sceneId/patchX/patchY (u32 LE), alpha
/// dims (H,W,C as u32 LE) + f32 LE payload, beta likewise, then the map
/// count and per-map length-prefixed RF blobs.
std::vector<std::uint8_t> sample_serialize(const FusionSample& s);
FusionSample sample_deserialize(const std::uint8_t* data, std::size_t size);
FusionSample sample_deserialize(const std::vector<std::uint8_t>& bytes);

void sample_save(const FusionSample& s, const std::string& path);
FusionSample sample_load(const std::string& path);

} // namespace pat::data
