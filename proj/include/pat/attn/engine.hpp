/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/parallel.hpp"
#include "pat/geom/receptive_field.hpp"
#include "pat/nn/layers.hpp"
#include "pat/nn/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pat::attn {

using geom::ReceptiveFieldMap;
using nn::Tensor;

/// Score assigned to invalid receptive-field slots before the softmax.
/// Large enough that the exponential underflows to exactly zero against any
/// finite valid score; weights are additionally forced to zero explicitly.
inline constexpr double kMaskScore = -1e30;

/// One gathered key/value row: n voxels of depth D plus per-slot validity.
template <typename T>
struct GatheredRow {
    std::uint32_t n = 0;
    int depth = 0;
    std::vector<T> voxels;           // n * depth, slot-major
    std::vector<std::uint8_t> valid; // n

    const T* slot(std::uint32_t i) const { return voxels.data() + std::size_t(i) * depth; }
};

/// Scores and normalized weights for one alpha voxel against one view.
template <typename T>
struct ScoreRow {
    std::vector<T> scores;  // n, kMaskScore at invalid slots
    std::vector<T> weights; // n, exactly 0 at invalid slots
    std::uint32_t validCount = 0;
};

/// Gathers the receptive-field row of alpha voxel j from a beta feature.
template <typename T>
GatheredRow<T> collect(const Tensor<T>& beta, const ReceptiveFieldMap& rf, std::size_t j) {
    if (rf.betaWidth != std::uint32_t(beta.width) || rf.betaHeight != std::uint32_t(beta.height))
        throw std::invalid_argument("collect: receptive-field map does not match beta dims");
    if (j >= rf.rows()) throw std::out_of_range("collect: alpha voxel index out of range");
    GatheredRow<T> out;
    out.n = rf.n;
    out.depth = beta.depth;
    out.voxels.resize(std::size_t(rf.n) * beta.depth, T(0));
    out.valid.resize(rf.n);
    const std::size_t betaVoxels = beta.voxels();
    for (std::uint32_t i = 0; i < rf.n; ++i) {
        out.valid[i] = rf.valid[j * rf.n + i];
        const std::uint32_t idx = rf.indices[j * rf.n + i];
        if (idx >= betaVoxels)
            throw std::runtime_error("collect: corrupt receptive-field map (index out of bounds)");
        if (out.valid[i]) {
            const T* src = beta.voxel(idx);
            std::copy(src, src + beta.depth, out.voxels.data() + std::size_t(i) * beta.depth);
        }
    }
    return out;
}

/// Dot-product scores of a query voxel against a gathered key row, followed
/// by a masked softmax. Invalid slots score kMaskScore and weigh exactly 0.
template <typename T>
ScoreRow<T> correlate(const T* q, const GatheredRow<T>& keys) {
    const std::uint32_t n = keys.n;
    const int D = keys.depth;
    ScoreRow<T> row;
    row.scores.assign(n, T(kMaskScore));
    row.weights.assign(n, T(0));
    T maxScore = T(kMaskScore);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!keys.valid[i]) continue;
        const T* k = keys.slot(i);
        T s = 0;
        for (int d = 0; d < D; ++d) s += q[d] * k[d];
        row.scores[i] = s;
        if (row.validCount == 0 || s > maxScore) maxScore = s;
        ++row.validCount;
    }
    if (row.validCount == 0) return row;
    T total = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!keys.valid[i]) continue;
        const T w = std::exp(row.scores[i] - maxScore);
        row.weights[i] = w;
        total += w;
    }
    const T inv = T(1) / total;
    for (std::uint32_t i = 0; i < n; ++i) row.weights[i] *= inv;
    return row;
}

/// Softmax-weighted mixture of the gathered value voxels.
template <typename T>
std::vector<T> combine(const ScoreRow<T>& row, const GatheredRow<T>& values) {
    if (row.validCount == 0)
        throw std::runtime_error("combine: no valid receptive-field slot (corrupt map)");
    if (row.weights.size() != values.n)
        throw std::invalid_argument("combine: slot count mismatch");
    std::vector<T> out(values.depth, T(0));
    for (std::uint32_t i = 0; i < values.n; ++i) {
        const T w = row.weights[i];
        if (w == T(0)) continue;
        const T* v = values.slot(i);
        for (int d = 0; d < values.depth; ++d) out[d] += w * v[d];
    }
    return out;
}

/// The C3 stage over alpha voxels [lo, hi): per voxel, gather keys through
/// the receptive fields, masked softmax of the dot-product scores, mix the
/// gathered values. Writes block 0 of U from `alpha` and block i+1 from view
/// i. `weights`, when non-null, receives the softmax rows (training cache).
/// This is the O(m*H*W*D*L) kernel of the complexity contract.
template <typename T>
void c3_range(const Tensor<T>& alpha, const Tensor<T>& q,
              const std::vector<const Tensor<T>*>& ks, const std::vector<const Tensor<T>*>& vs,
              const std::vector<const ReceptiveFieldMap*>& rfs, T scale, std::size_t lo,
              std::size_t hi, Tensor<T>& u, std::vector<Tensor<T>>* weights) {
    const std::size_t m = ks.size();
    const int D = q.depth;
    parallel_chunks(lo, hi, 256, [&](std::size_t, std::size_t a, std::size_t b) {
        std::vector<T> scores, scratch;
        for (std::size_t j = a; j < b; ++j) {
            T* uj = u.voxel(j);
            const T* aj = alpha.voxel(j);
            std::copy(aj, aj + D, uj);
            const T* qj = q.voxel(j);
            for (std::size_t i = 0; i < m; ++i) {
                const ReceptiveFieldMap& rf = *rfs[i];
                const std::uint32_t n = rf.n;
                scores.assign(n, T(0));
                T maxScore = 0;
                bool any = false;
                const std::uint32_t* idxRow = rf.indices.data() + j * n;
                const std::uint8_t* valRow = rf.valid.data() + j * n;
                const Tensor<T>& K = *ks[i];
                const Tensor<T>& V = *vs[i];
                for (std::uint32_t s = 0; s < n; ++s) {
                    if (!valRow[s]) continue;
                    const T* k = K.voxel(idxRow[s]);
                    T acc = 0;
                    for (int d = 0; d < D; ++d) acc += qj[d] * k[d];
                    acc *= scale;
                    scores[s] = acc;
                    if (!any || acc > maxScore) maxScore = acc;
                    any = true;
                }
                if (!any)
                    throw std::runtime_error("attention: receptive-field row with no valid slot");
                T* wj;
                if (weights) {
                    wj = (*weights)[i].voxel(j);
                } else {
                    scratch.assign(n, T(0));
                    wj = scratch.data();
                }
                T total = 0;
                for (std::uint32_t s = 0; s < n; ++s) {
                    if (valRow[s]) {
                        const T e = std::exp(scores[s] - maxScore);
                        wj[s] = e;
                        total += e;
                    } else {
                        wj[s] = T(0);
                    }
                }
                const T inv = T(1) / total;
                T* uv = uj + (i + 1) * D;
                std::fill(uv, uv + D, T(0));
                for (std::uint32_t s = 0; s < n; ++s) {
                    wj[s] *= inv;
                    if (wj[s] == T(0)) continue;
                    const T* v = V.voxel(idxRow[s]);
                    const T w = wj[s];
                    for (int d = 0; d < D; ++d) uv[d] += w * v[d];
                }
            }
        }
    });
}

/// Projection head: residual block followed by a 1x1 convolution.
template <typename T>
class Head {
public:
    Head(nn::ParamStore<T>& store, const std::string& name, int depth, T slope, Rng& rng)
        : block_(store, name + ".block", depth, slope, rng),
          proj_(store, name + ".proj", depth, depth, 1, 1, rng) {}

    Tensor<T> forward(const Tensor<T>& x) { return proj_.forward(block_.forward(x)); }
    Tensor<T> backward(const Tensor<T>& g) { return block_.backward(proj_.backward(g)); }

    Head share() const { return Head(block_.share(), proj_.share()); }

private:
    Head(nn::ResidualBlock<T> block, nn::Conv2d<T> proj)
        : block_(std::move(block)), proj_(std::move(proj)) {}

    nn::ResidualBlock<T> block_;
    nn::Conv2d<T> proj_;
};

template <typename T>
struct AttentionGrads {
    Tensor<T> alpha;
    std::vector<Tensor<T>> betas;
};

/// The C3 engine: Q/K/V heads plus the per-voxel collect-correlate-combine
/// stage. K and V head weights are shared across beta views; each view gets
/// its own head clone so forward caches stay separate for backward.
template <typename T>
class AttentionEngine {
public:
    AttentionEngine(nn::ParamStore<T>& store, const std::string& name, int depth, T slope,
                    Rng& rng, bool scaledScores = false)
        : depth_(depth), scaled_(scaledScores),
          qHead_(store, name + ".q", depth, slope, rng),
          kHead_(store, name + ".k", depth, slope, rng),
          vHead_(store, name + ".v", depth, slope, rng) {}

    int depth() const { return depth_; }

    /// Output U: depth (m+1)*D, block 0 the alpha feature itself, block i the
    /// value transferred from beta view i.
    Tensor<T> forward(const Tensor<T>& alpha, const std::vector<const Tensor<T>*>& betas,
                      const std::vector<const ReceptiveFieldMap*>& rfs) {
        check_inputs(alpha, betas, rfs);
        const std::size_t m = betas.size();
        ensure_views(m);

        alphaIn_ = alpha;
        betaIn_.assign(betas.size(), Tensor<T>());
        for (std::size_t i = 0; i < m; ++i) betaIn_[i] = *betas[i];
        rfs_.assign(rfs.begin(), rfs.end());

        q_ = qHead_.forward(alpha);
        k_.resize(m);
        v_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            k_[i] = kViews_[i].forward(*betas[i]);
            v_[i] = vViews_[i].forward(*betas[i]);
        }

        const std::size_t voxels = alpha.voxels();
        weights_.assign(m, Tensor<T>());
        for (std::size_t i = 0; i < m; ++i)
            weights_[i] = Tensor<T>(alpha.height, alpha.width, int(rfs[i]->n));

        Tensor<T> u(alpha.height, alpha.width, int(m + 1) * depth_);
        run_c3(0, voxels, m, u, alpha);
        hasForward_ = true;
        return u;
    }

    /// Gradients for the alpha/beta features; head parameter gradients are
    /// accumulated into the store. Requires a preceding forward.
    AttentionGrads<T> backward(const Tensor<T>& upstream) {
        if (!hasForward_) throw std::runtime_error("attention: backward before forward");
        const std::size_t m = betaIn_.size();
        const int H = alphaIn_.height, W = alphaIn_.width;
        if (upstream.height != H || upstream.width != W ||
            upstream.depth != int(m + 1) * depth_)
            throw std::invalid_argument("attention: upstream gradient shape mismatch");

        AttentionGrads<T> out;
        out.alpha = Tensor<T>(H, W, depth_);
        Tensor<T> gQ(H, W, depth_);
        std::vector<Tensor<T>> gK(m), gV(m);
        for (std::size_t i = 0; i < m; ++i) {
            gK[i] = Tensor<T>(betaIn_[i].height, betaIn_[i].width, depth_);
            gV[i] = Tensor<T>(betaIn_[i].height, betaIn_[i].width, depth_);
        }

        // C3 backward. Alpha-voxel rows write disjoint gQ/out.alpha entries;
        // the beta-side scatters go through per-chunk partials reduced in
        // chunk order so the result is thread-count independent.
        const std::size_t voxels = alphaIn_.voxels();
        const std::size_t chunkSize = 512;
        const std::size_t nChunks = (voxels + chunkSize - 1) / chunkSize;
        std::vector<std::vector<Tensor<T>>> gkPart(nChunks), gvPart(nChunks);
        parallel_chunks(0, voxels, chunkSize, [&](std::size_t c, std::size_t lo, std::size_t hi) {
            auto& gkp = gkPart[c];
            auto& gvp = gvPart[c];
            gkp.resize(m);
            gvp.resize(m);
            for (std::size_t i = 0; i < m; ++i) {
                gkp[i] = Tensor<T>(betaIn_[i].height, betaIn_[i].width, depth_);
                gvp[i] = Tensor<T>(betaIn_[i].height, betaIn_[i].width, depth_);
            }
            std::vector<T> gw, gs;
            for (std::size_t j = lo; j < hi; ++j) {
                const T* gU = upstream.voxel(j);
                // block 0 feeds the alpha feature directly
                std::copy(gU, gU + depth_, out.alpha.voxel(j));
                T* gq = gQ.voxel(j);
                const T* q = q_.voxel(j);
                for (std::size_t i = 0; i < m; ++i) {
                    const ReceptiveFieldMap& rf = *rfs_[i];
                    const std::uint32_t n = rf.n;
                    const T* gu = gU + (i + 1) * depth_;
                    const T* w = weights_[i].voxel(j);
                    gw.assign(n, T(0));
                    gs.assign(n, T(0));
                    T dot = 0; // sum_k w_k * gw_k for the softmax Jacobian
                    for (std::uint32_t s = 0; s < n; ++s) {
                        if (w[s] == T(0)) continue;
                        const std::uint32_t idx = rf.indices[j * n + s];
                        const T* v = v_[i].voxel(idx);
                        T g = 0;
                        for (int d = 0; d < depth_; ++d) g += gu[d] * v[d];
                        gw[s] = g;
                        dot += w[s] * g;
                        // value gradient: gV[idx] += w_s * gu
                        T* gvRow = gvp[i].voxel(idx);
                        for (int d = 0; d < depth_; ++d) gvRow[d] += w[s] * gu[d];
                    }
                    const T scale = scaled_ ? T(1) / std::sqrt(T(depth_)) : T(1);
                    for (std::uint32_t s = 0; s < n; ++s) {
                        if (!rf.valid[j * n + s]) continue;
                        gs[s] = w[s] * (gw[s] - dot) * scale;
                        if (gs[s] == T(0)) continue;
                        const std::uint32_t idx = rf.indices[j * n + s];
                        const T* k = k_[i].voxel(idx);
                        T* gkRow = gkp[i].voxel(idx);
                        for (int d = 0; d < depth_; ++d) {
                            gq[d] += gs[s] * k[d];
                            gkRow[d] += gs[s] * q[d];
                        }
                    }
                }
            }
        });
        for (std::size_t c = 0; c < nChunks; ++c)
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t t = 0; t < gK[i].size(); ++t) gK[i].values[t] += gkPart[c][i].values[t];
                for (std::size_t t = 0; t < gV[i].size(); ++t) gV[i].values[t] += gvPart[c][i].values[t];
            }

        // Heads. Per-view clones hold the right caches from forward.
        Tensor<T> gAlphaHead = qHead_.backward(gQ);
        for (std::size_t t = 0; t < out.alpha.size(); ++t)
            out.alpha.values[t] += gAlphaHead.values[t];
        out.betas.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            out.betas[i] = kViews_[i].backward(gK[i]);
            Tensor<T> gvb = vViews_[i].backward(gV[i]);
            for (std::size_t t = 0; t < out.betas[i].size(); ++t)
                out.betas[i].values[t] += gvb.values[t];
        }
        return out;
    }

    /// Full-frame heads, C3 evaluated patch by patch over the alpha grid.
    /// Equal to forward() because the C3 stage is independent per alpha voxel.
    Tensor<T> patched_inference(const Tensor<T>& alpha, const std::vector<const Tensor<T>*>& betas,
                                const std::vector<const ReceptiveFieldMap*>& rfs, int patchH,
                                int patchW) {
        check_inputs(alpha, betas, rfs);
        if (patchH < 1 || patchW < 1 || patchH > alpha.height || patchW > alpha.width)
            throw std::invalid_argument("attention: patch dims must be in [1, alpha dims]");
        const std::size_t m = betas.size();
        ensure_views(m);
        rfs_.assign(rfs.begin(), rfs.end());

        q_ = qHead_.forward(alpha);
        k_.resize(m);
        v_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            k_[i] = kViews_[i].forward(*betas[i]);
            v_[i] = vViews_[i].forward(*betas[i]);
        }
        weights_.assign(m, Tensor<T>());
        for (std::size_t i = 0; i < m; ++i)
            weights_[i] = Tensor<T>(alpha.height, alpha.width, int(rfs[i]->n));

        Tensor<T> u(alpha.height, alpha.width, int(m + 1) * depth_);
        for (int y0 = 0; y0 < alpha.height; y0 += patchH)
            for (int x0 = 0; x0 < alpha.width; x0 += patchW) {
                const int y1 = std::min(y0 + patchH, alpha.height);
                const int x1 = std::min(x0 + patchW, alpha.width);
                for (int y = y0; y < y1; ++y) {
                    const std::size_t lo = std::size_t(y) * alpha.width + x0;
                    run_c3(lo, lo + (x1 - x0), m, u, alpha);
                }
            }
        hasForward_ = false; // patched path keeps no per-voxel training cache
        return u;
    }

    /// Attention weights of the last forward for one view (debug/inspection).
    const Tensor<T>& last_weights(std::size_t view) const { return weights_.at(view); }
    const Tensor<T>& last_query() const { return q_; }

private:
    void check_inputs(const Tensor<T>& alpha, const std::vector<const Tensor<T>*>& betas,
                      const std::vector<const ReceptiveFieldMap*>& rfs) const {
        if (betas.empty()) throw std::invalid_argument("attention: need at least one beta view");
        if (betas.size() != rfs.size())
            throw std::invalid_argument("attention: beta/receptive-field count mismatch (m=" +
                                        std::to_string(betas.size()) + " vs " +
                                        std::to_string(rfs.size()) + " maps)");
        if (alpha.depth != depth_) throw std::invalid_argument("attention: alpha depth mismatch");
        for (std::size_t i = 0; i < betas.size(); ++i) {
            if (betas[i]->depth != depth_)
                throw std::invalid_argument("attention: beta depth mismatch");
            const ReceptiveFieldMap& rf = *rfs[i];
            if (rf.alphaWidth != std::uint32_t(alpha.width) ||
                rf.alphaHeight != std::uint32_t(alpha.height) ||
                rf.betaWidth != std::uint32_t(betas[i]->width) ||
                rf.betaHeight != std::uint32_t(betas[i]->height))
                throw std::invalid_argument("attention: receptive-field dims mismatch for view " +
                                            std::to_string(i));
        }
    }

    void ensure_views(std::size_t m) {
        while (kViews_.size() < m) {
            kViews_.push_back(kHead_.share());
            vViews_.push_back(vHead_.share());
        }
    }

    void run_c3(std::size_t lo, std::size_t hi, std::size_t m, Tensor<T>& u,
                const Tensor<T>& alpha) {
        const T scale = scaled_ ? T(1) / std::sqrt(T(depth_)) : T(1);
        std::vector<const Tensor<T>*> ks, vs;
        for (std::size_t i = 0; i < m; ++i) {
            ks.push_back(&k_[i]);
            vs.push_back(&v_[i]);
        }
        c3_range(alpha, q_, ks, vs, rfs_, scale, lo, hi, u, &weights_);
    }

    int depth_;
    bool scaled_;
    Head<T> qHead_, kHead_, vHead_;
    std::vector<Head<T>> kViews_, vViews_;

    // forward caches
    bool hasForward_ = false;
    Tensor<T> alphaIn_;
    std::vector<Tensor<T>> betaIn_;
    std::vector<const ReceptiveFieldMap*> rfs_;
    Tensor<T> q_;
    std::vector<Tensor<T>> k_, v_;
    std::vector<Tensor<T>> weights_;
};

} // namespace pat::attn
