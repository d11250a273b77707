/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/parallel.hpp"
#include "pat/nn/ops.hpp"
#include "pat/nn/param_store.hpp"
#include "pat/nn/tensor.hpp"

#include <memory>
#include <string>
#include <utility>

namespace pat::nn {

/// 2D convolution, stride 1, zero padding d*(a-1)/2 so spatial dimensions
/// are preserved for every odd kernel size and dilation. Weight layout is
/// [ky][kx][outD][inD] so the inner products run over contiguous memory.
template <typename T>
class Conv2d {
public:
    Conv2d(ParamStore<T>& store, const std::string& name, int inDepth, int outDepth,
           int kernel, int dilation, Rng& rng)
        : inDepth_(inDepth), outDepth_(outDepth), kernel_(kernel), dilation_(dilation) {
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("conv2d: kernel size must be odd (got " +
                                        std::to_string(kernel) + ")");
        if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
        weight_ = store.create(name + ".weight", {kernel, kernel, outDepth, inDepth});
        bias_ = store.create(name + ".bias", {outDepth});
        he_uniform_init(weight_, std::size_t(kernel) * kernel * inDepth, rng);
    }

    int in_depth() const { return inDepth_; }
    int out_depth() const { return outDepth_; }
    Param<T>* weight() { return weight_; }
    Param<T>* bias() { return bias_; }

    /// A view onto the same parameters with an independent forward cache.
    /// Used to apply one set of weights to several inputs (weight sharing
    /// across views) while keeping per-input state for backward.
    Conv2d share() const { return Conv2d(weight_, bias_, inDepth_, outDepth_, kernel_, dilation_); }

    Tensor<T> forward(const Tensor<T>& input) {
        if (input.depth != inDepth_)
            throw std::invalid_argument("conv2d: input depth mismatch");
        input_ = input;
        const int H = input.height, W = input.width;
        const int r = dilation_ * (kernel_ - 1) / 2;
        Tensor<T> out(H, W, outDepth_);
        const T* wBase = weight_->value.data();
        const T* bias = bias_->value.data();

        parallel_for(0, std::size_t(H), [&](std::size_t yi) {
            const int y = int(yi);
            std::vector<T> acc(outDepth_);
            for (int x = 0; x < W; ++x) {
                std::copy(bias, bias + outDepth_, acc.begin());
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int iy = y + dilation_ * ky - r;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int ix = x + dilation_ * kx - r;
                        if (ix < 0 || ix >= W) continue;
                        const T* in = input.voxel(std::size_t(iy) * W + ix);
                        const T* w = wBase + ((std::size_t(ky) * kernel_ + kx) * outDepth_) * inDepth_;
                        for (int oc = 0; oc < outDepth_; ++oc) {
                            T s = 0;
                            const T* wRow = w + std::size_t(oc) * inDepth_;
                            for (int ic = 0; ic < inDepth_; ++ic) s += wRow[ic] * in[ic];
                            acc[oc] += s;
                        }
                    }
                }
                std::copy(acc.begin(), acc.end(), out.voxel(std::size_t(y) * W + x));
            }
        });
        return out;
    }

    /// Accumulates weight/bias gradients into the store and returns the
    /// gradient with respect to the input. Requires a preceding forward.
    Tensor<T> backward(const Tensor<T>& upstream) {
        if (input_.size() == 0) throw std::runtime_error("conv2d: backward before forward");
        const int H = input_.height, W = input_.width;
        if (upstream.height != H || upstream.width != W || upstream.depth != outDepth_)
            throw std::invalid_argument("conv2d: upstream gradient shape mismatch");
        const int r = dilation_ * (kernel_ - 1) / 2;
        const T* wBase = weight_->value.data();

        // Input gradient: for each input site, gather contributions from the
        // output sites whose taps touch it. Each input row is written by one
        // task only, so the result is deterministic under any thread count.
        Tensor<T> gradIn(H, W, inDepth_);
        parallel_for(0, std::size_t(H), [&](std::size_t iyi) {
            const int iy = int(iyi);
            for (int ix = 0; ix < W; ++ix) {
                T* gIn = gradIn.voxel(std::size_t(iy) * W + ix);
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int y = iy - dilation_ * ky + r;
                    if (y < 0 || y >= H) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int x = ix - dilation_ * kx + r;
                        if (x < 0 || x >= W) continue;
                        const T* g = upstream.voxel(std::size_t(y) * W + x);
                        const T* w = wBase + ((std::size_t(ky) * kernel_ + kx) * outDepth_) * inDepth_;
                        for (int oc = 0; oc < outDepth_; ++oc) {
                            const T go = g[oc];
                            const T* wRow = w + std::size_t(oc) * inDepth_;
                            for (int ic = 0; ic < inDepth_; ++ic) gIn[ic] += go * wRow[ic];
                        }
                    }
                }
            }
        });

        // Frozen layers propagate the input gradient but accumulate nothing.
        if (!weight_->trainable && !bias_->trainable) return gradIn;

        // Weight/bias gradients: fixed-size row chunks accumulate into
        // per-chunk partials, reduced in chunk order.
        const std::size_t chunkRows = 16;
        const std::size_t nChunks = (std::size_t(H) + chunkRows - 1) / chunkRows;
        const std::size_t wCount = weight_->count();
        std::vector<std::vector<T>> wPartial(nChunks);
        std::vector<std::vector<T>> bPartial(nChunks);
        parallel_chunks(0, std::size_t(H), chunkRows, [&](std::size_t c, std::size_t lo, std::size_t hi) {
            auto& wp = wPartial[c];
            auto& bp = bPartial[c];
            wp.assign(wCount, T(0));
            bp.assign(std::size_t(outDepth_), T(0));
            for (std::size_t yi = lo; yi < hi; ++yi) {
                const int y = int(yi);
                for (int x = 0; x < W; ++x) {
                    const T* g = upstream.voxel(std::size_t(y) * W + x);
                    for (int oc = 0; oc < outDepth_; ++oc) bp[oc] += g[oc];
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const int iy = y + dilation_ * ky - r;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < kernel_; ++kx) {
                            const int ix = x + dilation_ * kx - r;
                            if (ix < 0 || ix >= W) continue;
                            const T* in = input_.voxel(std::size_t(iy) * W + ix);
                            T* wg = wp.data() + ((std::size_t(ky) * kernel_ + kx) * outDepth_) * inDepth_;
                            for (int oc = 0; oc < outDepth_; ++oc) {
                                const T go = g[oc];
                                T* wRow = wg + std::size_t(oc) * inDepth_;
                                for (int ic = 0; ic < inDepth_; ++ic) wRow[ic] += go * in[ic];
                            }
                        }
                    }
                }
            }
        });
        for (std::size_t c = 0; c < nChunks; ++c) {
            if (weight_->trainable)
                for (std::size_t i = 0; i < wCount; ++i) weight_->grad[i] += wPartial[c][i];
            if (bias_->trainable)
                for (int oc = 0; oc < outDepth_; ++oc) bias_->grad[oc] += bPartial[c][oc];
        }
        return gradIn;
    }

private:
    Conv2d(Param<T>* w, Param<T>* b, int inDepth, int outDepth, int kernel, int dilation)
        : inDepth_(inDepth), outDepth_(outDepth), kernel_(kernel), dilation_(dilation),
          weight_(w), bias_(b) {}

    int inDepth_, outDepth_, kernel_, dilation_;
    Param<T>* weight_ = nullptr;
    Param<T>* bias_ = nullptr;
    Tensor<T> input_;
};

/// Elementwise LeakyReLU with cached input for the backward pass.
template <typename T>
class LeakyReLULayer {
public:
    explicit LeakyReLULayer(T slope) : slope_(slope) {}

    Tensor<T> forward(const Tensor<T>& input) {
        input_ = input;
        Tensor<T> out = input;
        for (T& v : out.values) v = leaky_relu(v, slope_);
        return out;
    }

    Tensor<T> backward(const Tensor<T>& upstream) {
        Tensor<T> g = upstream;
        for (std::size_t i = 0; i < g.size(); ++i)
            g.values[i] *= leaky_relu_grad(input_.values[i], slope_);
        return g;
    }

private:
    T slope_;
    Tensor<T> input_;
};

/// conv3x3 -> LeakyReLU -> conv3x3, added to the input. Shape preserving.
template <typename T>
class ResidualBlock {
public:
    ResidualBlock(ParamStore<T>& store, const std::string& name, int depth, T slope, Rng& rng)
        : conv1_(store, name + ".conv1", depth, depth, 3, 1, rng),
          conv2_(store, name + ".conv2", depth, depth, 3, 1, rng),
          act_(slope),
          depth_(depth) {}

    Tensor<T> forward(const Tensor<T>& input) {
        if (input.depth != depth_)
            throw std::invalid_argument("residual_block: depth mismatch");
        Tensor<T> branch = conv2_.forward(act_.forward(conv1_.forward(input)));
        for (std::size_t i = 0; i < branch.size(); ++i) branch.values[i] += input.values[i];
        return branch;
    }

    Tensor<T> backward(const Tensor<T>& upstream) {
        Tensor<T> g = conv1_.backward(act_.backward(conv2_.backward(upstream)));
        for (std::size_t i = 0; i < g.size(); ++i) g.values[i] += upstream.values[i];
        return g;
    }

    ResidualBlock share() const {
        return ResidualBlock(conv1_.share(), conv2_.share(), act_, depth_);
    }

private:
    ResidualBlock(Conv2d<T> c1, Conv2d<T> c2, LeakyReLULayer<T> act, int depth)
        : conv1_(std::move(c1)), conv2_(std::move(c2)), act_(act), depth_(depth) {}

    Conv2d<T> conv1_, conv2_;
    LeakyReLULayer<T> act_;
    int depth_;
};

/// Residual ASPP block: parallel dilated 3x3 convolutions (one per entry of
/// `dilations`, each followed by LeakyReLU), concatenated and fused by a
/// 1x1 convolution, wrapped residually.
template <typename T>
class ResAsppBlock {
public:
    ResAsppBlock(ParamStore<T>& store, const std::string& name, int depth, T slope,
                 const std::vector<int>& dilations, Rng& rng)
        : depth_(depth) {
        branches_.reserve(dilations.size());
        acts_.reserve(dilations.size());
        for (std::size_t i = 0; i < dilations.size(); ++i) {
            branches_.emplace_back(store, name + ".branch" + std::to_string(i), depth, depth, 3,
                                   dilations[i], rng);
            acts_.emplace_back(slope);
        }
        fuse_ = std::make_unique<Conv2d<T>>(store, name + ".fuse", depth * int(dilations.size()),
                                            depth, 1, 1, rng);
    }

    Tensor<T> forward(const Tensor<T>& input) {
        if (input.depth != depth_) throw std::invalid_argument("res_aspp: depth mismatch");
        std::vector<Tensor<T>> outs;
        outs.reserve(branches_.size());
        for (std::size_t i = 0; i < branches_.size(); ++i)
            outs.push_back(acts_[i].forward(branches_[i].forward(input)));
        std::vector<const Tensor<T>*> parts;
        for (auto& o : outs) parts.push_back(&o);
        Tensor<T> fused = fuse_->forward(concat_depth(parts));
        for (std::size_t i = 0; i < fused.size(); ++i) fused.values[i] += input.values[i];
        return fused;
    }

    Tensor<T> backward(const Tensor<T>& upstream) {
        Tensor<T> gConcat = fuse_->backward(upstream);
        Tensor<T> g = upstream; // residual path
        const std::size_t nb = branches_.size();
        for (std::size_t i = 0; i < nb; ++i) {
            Tensor<T> slice(gConcat.height, gConcat.width, depth_);
            for (std::size_t j = 0; j < slice.voxels(); ++j) {
                const T* src = gConcat.voxel(j) + i * std::size_t(depth_);
                std::copy(src, src + depth_, slice.voxel(j));
            }
            Tensor<T> gb = branches_[i].backward(acts_[i].backward(slice));
            for (std::size_t k = 0; k < g.size(); ++k) g.values[k] += gb.values[k];
        }
        return g;
    }

    ResAsppBlock share() const {
        ResAsppBlock out(depth_);
        for (std::size_t i = 0; i < branches_.size(); ++i) {
            out.branches_.push_back(branches_[i].share());
            out.acts_.push_back(acts_[i]);
        }
        out.fuse_ = std::make_unique<Conv2d<T>>(fuse_->share());
        return out;
    }

private:
    explicit ResAsppBlock(int depth) : depth_(depth) {}

    int depth_;
    std::vector<Conv2d<T>> branches_;
    std::vector<LeakyReLULayer<T>> acts_;
    std::unique_ptr<Conv2d<T>> fuse_;
};

} // namespace pat::nn
