/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/net/config_io.hpp"

namespace pat::net {

PatConfig pat_config_from(const KeyValueConfig& cfg) {
    PatConfig c;
    c.depth = cfg.get_int("depth", c.depth);
    c.upscale = cfg.get_int("upscale", c.upscale);
    c.inputChannels = cfg.get_int("input_channels", c.inputChannels);
    c.outputChannels = cfg.get_int("output_channels", c.outputChannels);
    c.viewCount = cfg.get_int("view_count", c.viewCount);
    c.repBlockCount = cfg.get_int("rep_blocks", c.repBlockCount);
    c.postFusionBlocks = cfg.get_int("post_fusion_blocks", c.postFusionBlocks);
    c.slope = cfg.get_double("slope", c.slope);
    c.scaledAttention = cfg.get_bool("scaled_attention", c.scaledAttention);
    c.asppDilations = cfg.get_int_list("aspp_dilations", c.asppDilations);
    c.validate();
    return c;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.get_int("epochs", t.epochs);
    t.batchSize = cfg.get_int("batch_size", t.batchSize);
    t.lr = cfg.get_double("lr", t.lr);
    t.lrHalfLifeEpochs = cfg.get_int("lr_half_life", t.lrHalfLifeEpochs);
    t.seed = cfg.get_u64("seed", t.seed);
    t.degrade = cfg.get_bool("augment", t.degrade);
    t.fourView = cfg.get_bool("four_view", t.fourView);
    t.prefetchDepth = cfg.get_int("prefetch_depth", t.prefetchDepth);
    return t;
}

std::vector<std::string> known_net_keys() {
    return {"depth",        "upscale",       "input_channels",     "output_channels",
            "view_count",   "rep_blocks",    "post_fusion_blocks", "slope",
            "scaled_attention", "aspp_dilations", "epochs",         "batch_size",
            "lr",           "lr_half_life",  "seed",               "augment",
            "four_view",    "prefetch_depth"};
}

} // namespace pat::net
