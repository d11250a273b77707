/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/config.hpp"
#include "pat/net/model.hpp"
#include "pat/net/trainer.hpp"

#include <string>
#include <vector>

namespace pat::net {

/// Model keys: depth, upscale, input_channels, output_channels, view_count,
/// rep_blocks, post_fusion_blocks, slope, scaled_attention, aspp_dilations.
PatConfig pat_config_from(const KeyValueConfig& cfg);

/// Trainer keys: epochs, batch_size, lr, lr_half_life, seed, augment,
/// four_view, prefetch_depth.
TrainConfig train_config_from(const KeyValueConfig& cfg);

/// All keys the two builders understand (for typo warnings).
std::vector<std::string> known_net_keys();

} // namespace pat::net
