/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/attn/engine.hpp"
#include "pat/nn/layers.hpp"
#include "pat/nn/param_store.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pat::net {

using geom::ReceptiveFieldMap;
using nn::Tensor;

struct PatConfig {
    int depth = 64;         // feature depth D
    int upscale = 1;        // s
    int inputChannels = 3;  // C per view
    int outputChannels = 3; // C-tilde
    int viewCount = 1;      // beta views m
    int repBlockCount = 1;  // resASPP+resblock pairs in the representation module
    int postFusionBlocks = 2;
    double slope = 0.1;
    bool scaledAttention = false;
    std::vector<int> asppDilations{1, 4, 8};

    void validate() const {
        if (depth < 1 || upscale < 1 || upscale > 2 || inputChannels < 1 || outputChannels < 1 ||
            viewCount < 1 || repBlockCount < 0 || postFusionBlocks < 0 || asppDilations.empty())
            throw std::invalid_argument("pat config: counts must be positive (s in {1,2})");
    }
};

/// Rearranges depth s*s*C into an s-times larger spatial grid.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s, int outChannels) {
    if (x.depth != s * s * outChannels)
        throw std::invalid_argument("pixel_shuffle: depth must equal s*s*C");
    Tensor<T> out(x.height * s, x.width * s, outChannels);
    for (int y = 0; y < x.height; ++y)
        for (int xcol = 0; xcol < x.width; ++xcol) {
            const T* v = x.voxel(std::size_t(y) * x.width + xcol);
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) {
                    T* o = out.voxel(std::size_t(y * s + dy) * out.width + (xcol * s + dx));
                    for (int c = 0; c < outChannels; ++c) o[c] = v[(c * s + dy) * s + dx];
                }
        }
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s, int outChannels) {
    if (x.height % s || x.width % s || x.depth != outChannels)
        throw std::invalid_argument("pixel_unshuffle: dims not divisible by s");
    Tensor<T> out(x.height / s, x.width / s, s * s * outChannels);
    for (int y = 0; y < out.height; ++y)
        for (int xcol = 0; xcol < out.width; ++xcol) {
            T* o = out.voxel(std::size_t(y) * out.width + xcol);
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) {
                    const T* v = x.voxel(std::size_t(y * s + dy) * x.width + (xcol * s + dx));
                    for (int c = 0; c < outChannels; ++c) o[(c * s + dy) * s + dx] = v[c];
                }
        }
    return out;
}

/// Splits an RGB patch into three single-channel tensors (channel i of input
/// i equals channel i of the patch).
template <typename T>
std::vector<Tensor<T>> unpack_channels(const Tensor<T>& patch) {
    if (patch.depth != 3) throw std::invalid_argument("unpack_channels: expected 3 channels");
    std::vector<Tensor<T>> out(3, Tensor<T>(patch.height, patch.width, 1));
    for (std::size_t j = 0; j < patch.voxels(); ++j) {
        const T* v = patch.voxel(j);
        for (int c = 0; c < 3; ++c) out[std::size_t(c)].values[j] = v[c];
    }
    return out;
}

template <typename T>
Tensor<T> repack_channels(const std::vector<Tensor<T>>& channels) {
    if (channels.size() != 3) throw std::invalid_argument("repack_channels: expected 3 inputs");
    Tensor<T> out(channels[0].height, channels[0].width, 3);
    for (std::size_t j = 0; j < out.voxels(); ++j)
        for (int c = 0; c < 3; ++c) out.voxel(j)[c] = channels[std::size_t(c)].values[j];
    return out;
}

/// Shared representation module: 3x3 conv to depth D, LeakyReLU, then
/// repBlockCount x (resASPP + residual block).
template <typename T>
class RepModule {
public:
    RepModule(nn::ParamStore<T>& store, const std::string& name, const PatConfig& cfg, Rng& rng)
        : stem_(store, name + ".stem", cfg.inputChannels, cfg.depth, 3, 1, rng),
          act_(T(cfg.slope)) {
        for (int b = 0; b < cfg.repBlockCount; ++b) {
            aspp_.emplace_back(store, name + ".aspp" + std::to_string(b), cfg.depth,
                               T(cfg.slope), cfg.asppDilations, rng);
            res_.emplace_back(store, name + ".res" + std::to_string(b), cfg.depth, T(cfg.slope),
                              rng);
        }
    }

    Tensor<T> forward(const Tensor<T>& image) {
        Tensor<T> f = act_.forward(stem_.forward(image));
        for (std::size_t b = 0; b < aspp_.size(); ++b) f = res_[b].forward(aspp_[b].forward(f));
        return f;
    }

    Tensor<T> backward(const Tensor<T>& upstream) {
        Tensor<T> g = upstream;
        for (std::size_t b = aspp_.size(); b-- > 0;) g = aspp_[b].backward(res_[b].backward(g));
        return stem_.backward(act_.backward(g));
    }

    RepModule share() const {
        RepModule out(stem_.share(), act_);
        for (std::size_t b = 0; b < aspp_.size(); ++b) {
            out.aspp_.push_back(aspp_[b].share());
            out.res_.push_back(res_[b].share());
        }
        return out;
    }

private:
    RepModule(nn::Conv2d<T> stem, nn::LeakyReLULayer<T> act)
        : stem_(std::move(stem)), act_(act) {}

    nn::Conv2d<T> stem_;
    nn::LeakyReLULayer<T> act_;
    std::vector<nn::ResAsppBlock<T>> aspp_;
    std::vector<nn::ResidualBlock<T>> res_;
};

/// The full network: shared representation, C3 attention, post-fusion trunk
/// (1x1 fuse, residual blocks, output conv), optional sub-pixel upscaling.
template <typename T>
class PatModel {
public:
    PatModel(PatConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix64(seed));
        rep_ = std::make_unique<RepModule<T>>(store_, "rep", cfg_, rng);
        attn_ = std::make_unique<attn::AttentionEngine<T>>(store_, "attn", cfg_.depth,
                                                           T(cfg_.slope), rng,
                                                           cfg_.scaledAttention);
        fuse_ = std::make_unique<nn::Conv2d<T>>(store_, "post.fuse",
                                                (cfg_.viewCount + 1) * cfg_.depth, cfg_.depth, 1,
                                                1, rng);
        fuseAct_ = std::make_unique<nn::LeakyReLULayer<T>>(T(cfg_.slope));
        for (int b = 0; b < cfg_.postFusionBlocks; ++b)
            post_.emplace_back(store_, "post.res" + std::to_string(b), cfg_.depth, T(cfg_.slope),
                               rng);
        const int outDepth = cfg_.outputChannels * cfg_.upscale * cfg_.upscale;
        out_ = std::make_unique<nn::Conv2d<T>>(store_, "post.out", cfg_.depth, outDepth, 3, 1,
                                               rng);
    }

    const PatConfig& config() const { return cfg_; }
    nn::ParamStore<T>& store() { return store_; }
    const nn::ParamStore<T>& store() const { return store_; }
    attn::AttentionEngine<T>& attention() { return *attn_; }

    /// Runs the shared representation module on one image without touching
    /// the training caches (fresh parameter view per call).
    Tensor<T> representation_forward(const Tensor<T>& image) {
        RepModule<T> view = rep_->share();
        return view.forward(adapt_channels(image));
    }

    /// Full forward pass. Inputs are normalized [0,1] images; the output is
    /// the fused image estimate (not clamped).
    Tensor<T> forward(const Tensor<T>& alphaImage, const std::vector<const Tensor<T>*>& betaImages,
                      const std::vector<const ReceptiveFieldMap*>& rfs) {
        const std::size_t m = betaImages.size();
        if (m == 0) throw std::invalid_argument("pat_forward: need at least one beta view");
        if (int(m) != cfg_.viewCount)
            throw std::invalid_argument("pat_forward: configured for m=" +
                                        std::to_string(cfg_.viewCount) + ", got " +
                                        std::to_string(m) + " beta views");
        ensure_reps(m + 1);

        alphaIn_ = adapt_channels(alphaImage);
        betaIn_.resize(m);
        for (std::size_t i = 0; i < m; ++i) betaIn_[i] = adapt_channels(*betaImages[i]);

        alphaF_ = repViews_[0].forward(alphaIn_);
        betaF_.resize(m);
        std::vector<const Tensor<T>*> betaPtrs(m);
        for (std::size_t i = 0; i < m; ++i) {
            betaF_[i] = repViews_[i + 1].forward(betaIn_[i]);
            betaPtrs[i] = &betaF_[i];
        }

        Tensor<T> u = attn_->forward(alphaF_, betaPtrs, rfs);
        Tensor<T> x = fuseAct_->forward(fuse_->forward(u));
        for (auto& block : post_) x = block.forward(x);
        Tensor<T> y = out_->forward(x);
        if (cfg_.upscale > 1) y = pixel_shuffle(y, cfg_.upscale, cfg_.outputChannels);
        hasForward_ = true;
        return y;
    }

    /// Backward from the loss gradient of the output image. Accumulates all
    /// parameter gradients; returns nothing (inputs are data).
    void backward(const Tensor<T>& upstream) {
        if (!hasForward_) throw std::runtime_error("pat backward before forward");
        Tensor<T> g = upstream;
        if (cfg_.upscale > 1) g = pixel_unshuffle(g, cfg_.upscale, cfg_.outputChannels);
        g = out_->backward(g);
        for (std::size_t b = post_.size(); b-- > 0;) g = post_[b].backward(g);
        g = fuse_->backward(fuseAct_->backward(g));
        attn::AttentionGrads<T> ag = attn_->backward(g);
        repViews_[0].backward(ag.alpha);
        for (std::size_t i = 0; i < betaF_.size(); ++i) repViews_[i + 1].backward(ag.betas[i]);
    }

private:
    /// Accepts C-channel images directly; repeats monochrome input across
    /// channels when the model expects 3.
    Tensor<T> adapt_channels(const Tensor<T>& image) const {
        if (image.depth == cfg_.inputChannels) return image;
        if (image.depth == 1 && cfg_.inputChannels == 3) return nn::repeat_channels(image, 3);
        throw std::invalid_argument("pat: input has " + std::to_string(image.depth) +
                                    " channels, model expects " +
                                    std::to_string(cfg_.inputChannels));
    }

    void ensure_reps(std::size_t count) {
        while (repViews_.size() < count) repViews_.push_back(rep_->share());
    }

    PatConfig cfg_;
    nn::ParamStore<T> store_;
    std::unique_ptr<RepModule<T>> rep_;
    std::vector<RepModule<T>> repViews_;
    std::unique_ptr<attn::AttentionEngine<T>> attn_;
    std::unique_ptr<nn::Conv2d<T>> fuse_;
    std::unique_ptr<nn::LeakyReLULayer<T>> fuseAct_;
    std::vector<nn::ResidualBlock<T>> post_;
    std::unique_ptr<nn::Conv2d<T>> out_;

    bool hasForward_ = false;
    Tensor<T> alphaIn_;
    std::vector<Tensor<T>> betaIn_;
    Tensor<T> alphaF_;
    std::vector<Tensor<T>> betaF_;
};

} // namespace pat::net
