/* SPDX-License-Identifier: Apache-2.0 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pat/attn/bench.hpp"
#include "pat/attn/engine.hpp"
#include "pat/core/rng.hpp"
#include "pat/geom/epipolar.hpp"
#include "pat/nn/grad_check.hpp"
#include "pat/nn/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace pat;
using namespace pat::attn;
using geom::ReceptiveFieldMap;
using nn::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(int h, int w, int d, Rng& rng, T lo = T(-1), T hi = T(1)) {
    Tensor<T> t(h, w, d);
    for (auto& v : t.values) v = T(rng.uniform(double(lo), double(hi)));
    return t;
}

/// Map where every alpha voxel attends to every beta voxel.
ReceptiveFieldMap full_rf(int aW, int aH, int bW, int bH) {
    ReceptiveFieldMap rf;
    rf.alphaWidth = std::uint32_t(aW);
    rf.alphaHeight = std::uint32_t(aH);
    rf.betaWidth = std::uint32_t(bW);
    rf.betaHeight = std::uint32_t(bH);
    rf.n = std::uint32_t(bW * bH);
    rf.indices.resize(rf.slots());
    rf.valid.assign(rf.slots(), 1);
    for (std::size_t j = 0; j < rf.rows(); ++j)
        for (std::uint32_t s = 0; s < rf.n; ++s) rf.indices[j * rf.n + s] = s;
    rf.check();
    return rf;
}

/// Rectified-pair map: each alpha pixel attends to its whole image row.
ReceptiveFieldMap row_rf(int w, int h) {
    ReceptiveFieldMap rf;
    rf.alphaWidth = std::uint32_t(w);
    rf.alphaHeight = std::uint32_t(h);
    rf.betaWidth = std::uint32_t(w);
    rf.betaHeight = std::uint32_t(h);
    rf.n = std::uint32_t(w);
    rf.indices.resize(rf.slots());
    rf.valid.assign(rf.slots(), 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int s = 0; s < w; ++s)
                rf.indices[(std::size_t(y) * w + x) * w + s] = std::uint32_t(y * w + s);
    rf.check();
    return rf;
}

/// Random sparse map with at least one valid slot per row (slot 0).
ReceptiveFieldMap random_rf(int aW, int aH, int bW, int bH, std::uint32_t n, Rng& rng) {
    ReceptiveFieldMap rf;
    rf.alphaWidth = std::uint32_t(aW);
    rf.alphaHeight = std::uint32_t(aH);
    rf.betaWidth = std::uint32_t(bW);
    rf.betaHeight = std::uint32_t(bH);
    rf.n = n;
    rf.indices.resize(rf.slots());
    rf.valid.resize(rf.slots());
    const std::uint64_t betaVoxels = std::uint64_t(bW) * bH;
    for (std::size_t s = 0; s < rf.slots(); ++s) {
        rf.indices[s] = std::uint32_t(rng.below(betaVoxels));
        rf.valid[s] = (s % n == 0) ? 1 : std::uint8_t(rng.uniform() < 0.6);
    }
    rf.check();
    return rf;
}

/// Dense-attention oracle sharing no code with the kernel: per alpha voxel
/// and view, plain dot-product scores over the valid slots, textbook softmax
/// (per-slot division instead of a hoisted reciprocal), weighted value sum.
template <typename T>
Tensor<T> brute_c3(const Tensor<T>& alpha, const Tensor<T>& q,
                   const std::vector<const Tensor<T>*>& ks, const std::vector<const Tensor<T>*>& vs,
                   const std::vector<const ReceptiveFieldMap*>& rfs, T scale) {
    const int D = q.depth;
    const std::size_t m = ks.size();
    Tensor<T> u(alpha.height, alpha.width, int(m + 1) * D);
    for (std::size_t j = 0; j < alpha.voxels(); ++j) {
        for (int d = 0; d < D; ++d) u.voxel(j)[d] = alpha.voxel(j)[d];
        for (std::size_t i = 0; i < m; ++i) {
            const ReceptiveFieldMap& rf = *rfs[i];
            std::vector<T> score(rf.n, T(0));
            T best = std::numeric_limits<T>::lowest();
            for (std::uint32_t s = 0; s < rf.n; ++s) {
                if (!rf.valid_at(j, s)) continue;
                const T* k = ks[i]->voxel(rf.index_at(j, s));
                T acc = 0;
                for (int d = 0; d < D; ++d) acc += q.voxel(j)[d] * k[d];
                score[s] = acc * scale;
                best = std::max(best, score[s]);
            }
            std::vector<T> w(rf.n, T(0));
            T total = 0;
            for (std::uint32_t s = 0; s < rf.n; ++s) {
                if (!rf.valid_at(j, s)) continue;
                w[s] = std::exp(score[s] - best);
                total += w[s];
            }
            T* out = u.voxel(j) + (i + 1) * D;
            for (std::uint32_t s = 0; s < rf.n; ++s) {
                if (w[s] == T(0)) continue;
                const T* v = vs[i]->voxel(rf.index_at(j, s));
                for (int d = 0; d < D; ++d) out[d] += w[s] / total * v[d];
            }
        }
    }
    return u;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.values[i]) - double(b.values[i])));
    return worst;
}

/// Zeroes every head parameter under `name` and sets the three 1x1
/// projections to the identity, so Q(x) = K(x) = V(x) = x exactly.
template <typename T>
void make_identity_heads(nn::ParamStore<T>& store, const std::string& name, int depth) {
    for (auto& [pname, p] : store.named())
        if (pname.rfind(name + ".", 0) == 0)
            std::fill(p->value.begin(), p->value.end(), T(0));
    for (const char* head : {".q", ".k", ".v"}) {
        nn::Param<T>* p = store.find(name + head + ".proj.weight");
        REQUIRE(p != nullptr);
        for (int o = 0; o < depth; ++o) p->value[std::size_t(o) * depth + o] = T(1);
    }
}

} // namespace

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

TEST_CASE("collect gathers the receptive-field row with zero-filled padding") {
    Rng rng(11);
    const Tensor<float> beta = random_tensor<float>(2, 3, 4, rng);

    ReceptiveFieldMap rf;
    rf.alphaWidth = 2;
    rf.alphaHeight = 1;
    rf.betaWidth = 3;
    rf.betaHeight = 2;
    rf.n = 3;
    rf.indices = {5, 0, 2, /* row 1 */ 1, 1, 4};
    rf.valid = {1, 0, 1, /* row 1 */ 1, 1, 0};
    rf.check();

    const GatheredRow<float> row0 = collect(beta, rf, 0);
    CHECK(row0.n == 3);
    CHECK(row0.depth == 4);
    REQUIRE(row0.voxels.size() == 12);
    for (int d = 0; d < 4; ++d) {
        CHECK(row0.slot(0)[d] == beta.voxel(5)[d]);
        CHECK(row0.slot(1)[d] == 0.0f); // invalid slots must not leak data
        CHECK(row0.slot(2)[d] == beta.voxel(2)[d]);
    }
    CHECK(row0.valid == std::vector<std::uint8_t>{1, 0, 1});

    // Duplicate indices are gathered independently.
    const GatheredRow<float> row1 = collect(beta, rf, 1);
    for (int d = 0; d < 4; ++d) {
        CHECK(row1.slot(0)[d] == beta.voxel(1)[d]);
        CHECK(row1.slot(1)[d] == beta.voxel(1)[d]);
        CHECK(row1.slot(2)[d] == 0.0f);
    }
}

TEST_CASE("collect with a full-image row returns every beta voxel") {
    Rng rng(12);
    const Tensor<float> beta = random_tensor<float>(3, 4, 2, rng);
    const ReceptiveFieldMap rf = full_rf(2, 2, 4, 3);
    for (std::size_t j = 0; j < rf.rows(); ++j) {
        const GatheredRow<float> got = collect(beta, rf, j);
        REQUIRE(got.n == beta.voxels());
        for (std::uint32_t s = 0; s < got.n; ++s)
            for (int d = 0; d < 2; ++d) CHECK(got.slot(s)[d] == beta.voxel(s)[d]);
    }
}

TEST_CASE("collect on a random map matches direct indexing") {
    Rng rng(13);
    const Tensor<float> beta = random_tensor<float>(5, 7, 3, rng);
    const ReceptiveFieldMap rf = random_rf(4, 6, 7, 5, 5, rng);
    for (std::size_t j = 0; j < rf.rows(); ++j) {
        const GatheredRow<float> got = collect(beta, rf, j);
        for (std::uint32_t s = 0; s < rf.n; ++s) {
            CHECK(got.valid[s] == rf.valid[j * rf.n + s]);
            for (int d = 0; d < 3; ++d) {
                const float want = rf.valid_at(j, s) ? beta.voxel(rf.index_at(j, s))[d] : 0.0f;
                CHECK(got.slot(s)[d] == want);
            }
        }
    }
}

TEST_CASE("collect rejects mismatched maps and corrupt indices") {
    Rng rng(14);
    const Tensor<float> beta = random_tensor<float>(2, 2, 2, rng);
    ReceptiveFieldMap rf = full_rf(2, 2, 2, 2);

    CHECK_THROWS_AS((void)collect(random_tensor<float>(3, 2, 2, rng), rf, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)collect(beta, rf, rf.rows()), std::out_of_range);

    rf.indices[1] = 4; // out of the 2x2 beta even though the slot stays valid
    CHECK_THROWS_AS((void)collect(beta, rf, 0), std::runtime_error);
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

TEST_CASE("correlate: orthogonal query gives zero scores and uniform weights") {
    const int D = 3;
    GatheredRow<float> keys;
    keys.n = 4;
    keys.depth = D;
    keys.valid = {1, 1, 0, 1};
    keys.voxels = {0, 2, -1, /**/ 0, -3, 5, /**/ 0, 0, 0, /**/ 0, 7, 4};
    const float q[D] = {9.5f, 0.0f, 0.0f}; // orthogonal to every key

    const ScoreRow<float> row = correlate(q, keys);
    CHECK(row.validCount == 3);
    for (std::uint32_t s : {0u, 1u, 3u}) {
        CHECK(row.scores[s] == 0.0f);
        CHECK(row.weights[s] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    }
    CHECK(row.scores[2] == float(kMaskScore));
    CHECK(row.weights[2] == 0.0f); // exactly zero, not merely tiny
}

TEST_CASE("correlate: a dominant key takes essentially all the weight") {
    const int D = 2;
    GatheredRow<float> keys;
    keys.n = 3;
    keys.depth = D;
    keys.valid = {1, 1, 1};
    keys.voxels = {6.0f, 4.0f, /**/ 0.0f, 0.0f, /**/ 0.0f, 0.0f};
    const float q[D] = {6.0f, 4.0f}; // score 52 on slot 0, 0 elsewhere

    const ScoreRow<float> row = correlate(q, keys);
    CHECK(row.scores[0] == doctest::Approx(52.0));
    CHECK(row.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.weights[1] + row.weights[2] < 1e-12f);
}

TEST_CASE("correlate matches a naive dot-product and softmax oracle") {
    Rng rng(15);
    for (int trial = 0; trial < 50; ++trial) {
        const int D = 8, n = 5;
        GatheredRow<double> keys;
        keys.n = n;
        keys.depth = D;
        keys.voxels.resize(n * D);
        keys.valid.resize(n);
        for (auto& v : keys.voxels) v = rng.uniform(-2.0, 2.0);
        int validCount = 0;
        for (auto& f : keys.valid) validCount += (f = std::uint8_t(rng.uniform() < 0.7));
        if (!validCount) {
            keys.valid[0] = 1;
            validCount = 1;
        }
        std::vector<double> q(D);
        for (auto& v : q) v = rng.uniform(-2.0, 2.0);

        const ScoreRow<double> row = correlate(q.data(), keys);
        CHECK(row.validCount == std::uint32_t(validCount));

        // Scores: same accumulation order, so agreement down to FMA
        // contraction differences (a few ulp).
        std::vector<double> want(n, kMaskScore);
        for (int s = 0; s < n; ++s) {
            if (!keys.valid[s]) continue;
            double acc = 0;
            for (int d = 0; d < D; ++d) acc += q[d] * keys.slot(std::uint32_t(s))[d];
            want[s] = acc;
        }
        for (int s = 0; s < n; ++s) {
            if (!keys.valid[s])
                CHECK(row.scores[s] == want[s]);
            else
                CHECK(row.scores[s] == doctest::Approx(want[s]).epsilon(1e-13));
        }

        // Weights: textbook softmax over the valid scores.
        double best = std::numeric_limits<double>::lowest();
        for (int s = 0; s < n; ++s)
            if (keys.valid[s]) best = std::max(best, want[s]);
        double total = 0;
        for (int s = 0; s < n; ++s)
            if (keys.valid[s]) total += std::exp(want[s] - best);
        double sum = 0;
        for (int s = 0; s < n; ++s) {
            if (!keys.valid[s]) {
                CHECK(row.weights[s] == 0.0);
                continue;
            }
            CHECK(row.weights[s] ==
                  doctest::Approx(std::exp(want[s] - best) / total).epsilon(1e-12));
            sum += row.weights[s];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("correlate survives huge scores via max subtraction") {
    GatheredRow<float> keys;
    keys.n = 2;
    keys.depth = 1;
    keys.valid = {1, 1};
    keys.voxels = {300.0f, 299.0f};
    const float q[1] = {1.0f}; // raw exp(300) would overflow float

    const ScoreRow<float> row = correlate(q, keys);
    CHECK(std::isfinite(row.weights[0]));
    CHECK(row.weights[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-6));
    CHECK(row.weights[0] + row.weights[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("correlate reports rows with no valid slot") {
    GatheredRow<float> keys;
    keys.n = 2;
    keys.depth = 1;
    keys.valid = {0, 0};
    keys.voxels = {1.0f, 2.0f};
    const float q[1] = {1.0f};
    const ScoreRow<float> row = correlate(q, keys);
    CHECK(row.validCount == 0);
    CHECK(row.weights[0] == 0.0f);
    CHECK(row.weights[1] == 0.0f);
}

// ---------------------------------------------------------------------------
// combine
// ---------------------------------------------------------------------------

TEST_CASE("combine: singleton softmax returns the value voxel exactly") {
    GatheredRow<float> values;
    values.n = 3;
    values.depth = 2;
    values.valid = {0, 1, 0};
    values.voxels = {9, 9, /**/ 0.25f, -1.5f, /**/ 9, 9};
    const GatheredRow<float> keys = values;
    const float q[2] = {0.3f, 0.7f};

    const std::vector<float> out = combine(correlate(q, keys), values);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == 0.25f);
    CHECK(out[1] == -1.5f);
}

TEST_CASE("combine: identical value voxels come back unchanged for any scores") {
    Rng rng(16);
    GatheredRow<float> keys;
    keys.n = 4;
    keys.depth = 3;
    keys.valid = {1, 1, 1, 1};
    keys.voxels.resize(12);
    for (auto& v : keys.voxels) v = rng.uniform_f(-3.0f, 3.0f);

    GatheredRow<float> values = keys;
    for (int s = 0; s < 4; ++s)
        for (int d = 0; d < 3; ++d) values.voxels[std::size_t(s) * 3 + d] = float(d) - 0.5f;

    std::vector<float> q(3);
    for (auto& v : q) v = rng.uniform_f(-3.0f, 3.0f);
    const std::vector<float> out = combine(correlate(q.data(), keys), values);
    for (int d = 0; d < 3; ++d) CHECK(out[d] == doctest::Approx(double(d) - 0.5).epsilon(1e-6));
}

TEST_CASE("combine matches the dense-attention oracle on random rows") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int D = 4;
        const std::uint32_t n = 1 + std::uint32_t(rng.below(6));
        GatheredRow<double> keys, values;
        keys.n = values.n = n;
        keys.depth = values.depth = D;
        keys.voxels.resize(n * D);
        values.voxels.resize(n * D);
        keys.valid.resize(n);
        for (auto& v : keys.voxels) v = rng.uniform(-1.0, 1.0);
        for (auto& v : values.voxels) v = rng.uniform(-1.0, 1.0);
        for (auto& f : keys.valid) f = std::uint8_t(rng.uniform() < 0.6);
        keys.valid[std::size_t(rng.below(n))] = 1;
        values.valid = keys.valid;
        std::vector<double> q(D);
        for (auto& v : q) v = rng.uniform(-1.0, 1.0);

        const std::vector<double> got = combine(correlate(q.data(), keys), values);

        // Textbook restricted dense attention over the valid slots.
        std::vector<double> want(D, 0.0);
        std::vector<double> score(n, 0.0);
        double best = std::numeric_limits<double>::lowest(), total = 0;
        for (std::uint32_t s = 0; s < n; ++s) {
            if (!keys.valid[s]) continue;
            for (int d = 0; d < D; ++d) score[s] += q[d] * keys.slot(s)[d];
            best = std::max(best, score[s]);
        }
        for (std::uint32_t s = 0; s < n; ++s)
            if (keys.valid[s]) total += std::exp(score[s] - best);
        for (std::uint32_t s = 0; s < n; ++s) {
            if (!keys.valid[s]) continue;
            const double w = std::exp(score[s] - best) / total;
            for (int d = 0; d < D; ++d) want[d] += w * values.slot(s)[d];
        }
        for (int d = 0; d < D; ++d) CHECK(got[d] == doctest::Approx(want[d]).epsilon(1e-9));
    }
}

TEST_CASE("combine rejects rows with no valid slot or mismatched widths") {
    GatheredRow<float> values;
    values.n = 2;
    values.depth = 1;
    values.valid = {0, 0};
    values.voxels = {1, 2};
    const float q[1] = {1.0f};
    const ScoreRow<float> empty = correlate(q, values);
    CHECK_THROWS_AS((void)combine(empty, values), std::runtime_error);

    values.valid = {1, 1};
    ScoreRow<float> row = correlate(q, values);
    row.weights.resize(3);
    CHECK_THROWS_AS((void)combine(row, values), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// c3_range: the timed kernel
// ---------------------------------------------------------------------------

namespace {

/// Random sparse and dense maps, m views of assorted beta shapes; the kernel
/// must match the independently written dense oracle on the same support.
template <typename T>
void check_dense_equivalence(double tol) {
    Rng rng(21);
    const int dims[][2] = {{6, 4}, {5, 5}, {4, 7}};
    for (int m = 1; m <= 3; ++m) {
        for (int D : {4, 64}) {
            const int H = 5, W = 7;
            const Tensor<T> alpha = random_tensor<T>(H, W, D, rng);
            const Tensor<T> q = random_tensor<T>(H, W, D, rng);
            std::vector<Tensor<T>> kStore, vStore;
            std::vector<ReceptiveFieldMap> rfStore;
            for (int i = 0; i < m; ++i) {
                const int bH = dims[i][0], bW = dims[i][1];
                kStore.push_back(random_tensor<T>(bH, bW, D, rng));
                vStore.push_back(random_tensor<T>(bH, bW, D, rng));
                rfStore.push_back(i == 0 ? full_rf(W, H, bW, bH)
                                         : random_rf(W, H, bW, bH, 3 + std::uint32_t(i), rng));
            }
            std::vector<const Tensor<T>*> ks, vs;
            std::vector<const ReceptiveFieldMap*> rfs;
            for (int i = 0; i < m; ++i) {
                ks.push_back(&kStore[i]);
                vs.push_back(&vStore[i]);
                rfs.push_back(&rfStore[i]);
            }
            for (const T scale : {T(1), T(1) / std::sqrt(T(D))}) {
                Tensor<T> u(H, W, (m + 1) * D);
                c3_range<T>(alpha, q, ks, vs, rfs, scale, 0, alpha.voxels(), u, nullptr);
                const Tensor<T> want = brute_c3<T>(alpha, q, ks, vs, rfs, scale);
                CHECK(max_abs_diff(u, want) < tol);
                for (std::size_t j = 0; j < alpha.voxels(); ++j)
                    for (int d = 0; d < D; ++d) CHECK(u.voxel(j)[d] == alpha.voxel(j)[d]);
            }
        }
    }
}

} // namespace

TEST_CASE("c3_range equals dense attention on the same support (32-bit)") {
    check_dense_equivalence<float>(1e-6);
}

TEST_CASE("c3_range equals dense attention on the same support (64-bit)") {
    check_dense_equivalence<double>(1e-12);
}

TEST_CASE("c3_range outputs stay in the convex hull of the gathered values") {
    Rng rng(22);
    const int H = 4, W = 5, D = 3, m = 2;
    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng);
    const Tensor<float> q = random_tensor<float>(H, W, D, rng, -2.0f, 2.0f);
    std::vector<Tensor<float>> kS{random_tensor<float>(3, 6, D, rng),
                                  random_tensor<float>(4, 5, D, rng)};
    std::vector<Tensor<float>> vS{random_tensor<float>(3, 6, D, rng, -5.0f, 5.0f),
                                  random_tensor<float>(4, 5, D, rng, -5.0f, 5.0f)};
    std::vector<ReceptiveFieldMap> rfS{random_rf(W, H, 6, 3, 4, rng),
                                       random_rf(W, H, 5, 4, 6, rng)};
    std::vector<const Tensor<float>*> ks{&kS[0], &kS[1]}, vs{&vS[0], &vS[1]};
    std::vector<const ReceptiveFieldMap*> rfs{&rfS[0], &rfS[1]};

    Tensor<float> u(H, W, (m + 1) * D);
    c3_range<float>(alpha, q, ks, vs, rfs, 1.0f, 0, alpha.voxels(), u, nullptr);

    for (std::size_t j = 0; j < alpha.voxels(); ++j)
        for (int i = 0; i < m; ++i)
            for (int d = 0; d < D; ++d) {
                float lo = std::numeric_limits<float>::max(), hi = -lo;
                for (std::uint32_t s = 0; s < rfS[i].n; ++s) {
                    if (!rfS[i].valid_at(j, s)) continue;
                    const float v = vS[i].voxel(rfS[i].index_at(j, s))[d];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                const float got = u.voxel(j)[(i + 1) * D + d];
                CHECK(got >= lo - 1e-5f);
                CHECK(got <= hi + 1e-5f);
            }
}

TEST_CASE("c3_range: masked slots get exactly zero weight and leak nothing") {
    Rng rng(23);
    const int H = 3, W = 4, D = 2;
    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng);
    const Tensor<float> q = random_tensor<float>(H, W, D, rng);

    // Valid slots only ever reference the first beta row; the second row is
    // referenced by invalid slots alone.
    ReceptiveFieldMap rf;
    rf.alphaWidth = W;
    rf.alphaHeight = H;
    rf.betaWidth = 4;
    rf.betaHeight = 2;
    rf.n = 3;
    rf.indices.resize(rf.slots());
    rf.valid.resize(rf.slots());
    for (std::size_t j = 0; j < rf.rows(); ++j)
        for (std::uint32_t s = 0; s < rf.n; ++s) {
            const bool ok = s < 2;
            rf.valid[j * rf.n + s] = ok;
            rf.indices[j * rf.n + s] = ok ? std::uint32_t(rng.below(4)) : 4 + std::uint32_t(j % 4);
        }
    rf.check();

    const Tensor<float> kClean = random_tensor<float>(2, 4, D, rng);
    const Tensor<float> vClean = random_tensor<float>(2, 4, D, rng);
    Tensor<float> kPoison = kClean, vPoison = vClean;
    for (std::size_t jj = 4; jj < 8; ++jj)
        for (int d = 0; d < D; ++d) {
            kPoison.voxel(jj)[d] = 1e30f;
            vPoison.voxel(jj)[d] = -1e30f;
        }

    auto run = [&](const Tensor<float>& k, const Tensor<float>& v, Tensor<float>& weights) {
        std::vector<const Tensor<float>*> ks{&k}, vs{&v};
        std::vector<const ReceptiveFieldMap*> rfs{&rf};
        std::vector<Tensor<float>> w{Tensor<float>(H, W, int(rf.n))};
        Tensor<float> u(H, W, 2 * D);
        c3_range<float>(alpha, q, ks, vs, rfs, 1.0f, 0, alpha.voxels(), u, &w);
        weights = w[0];
        return u;
    };

    Tensor<float> wClean, wPoison;
    const Tensor<float> uClean = run(kClean, vClean, wClean);
    const Tensor<float> uPoison = run(kPoison, vPoison, wPoison);

    for (std::size_t t = 0; t < uClean.size(); ++t) CHECK(uClean.values[t] == uPoison.values[t]);
    for (std::size_t j = 0; j < rf.rows(); ++j) {
        CHECK(wPoison.voxel(j)[2] == 0.0f); // masked slot: exact zero
        CHECK(wPoison.voxel(j)[0] + wPoison.voxel(j)[1] == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("c3_range throws when a row has no valid slot") {
    const int H = 1, W = 2, D = 1;
    Tensor<float> alpha(H, W, D), q(H, W, D), k(1, 2, D), v(1, 2, D);
    ReceptiveFieldMap rf;
    rf.alphaWidth = W;
    rf.alphaHeight = H;
    rf.betaWidth = 2;
    rf.betaHeight = 1;
    rf.n = 1;
    rf.indices = {0, 1};
    rf.valid = {1, 0}; // second row violates the invariant; check() is skipped
    std::vector<const Tensor<float>*> ks{&k}, vs{&v};
    std::vector<const ReceptiveFieldMap*> rfs{&rf};
    Tensor<float> u(H, W, 2 * D);
    CHECK_THROWS_AS(c3_range<float>(alpha, q, ks, vs, rfs, 1.0f, 0, 2, u, nullptr),
                    std::runtime_error);
}

// ---------------------------------------------------------------------------
// AttentionEngine forward
// ---------------------------------------------------------------------------

TEST_CASE("engine with identity heads reproduces the PAM row-attention oracle") {
    // m = 1, alpha and beta the same rectified shape, full-row receptive
    // field, D = 64: the engine acts as parallax attention between a stereo
    // pair. With identity heads the oracle needs no head reimplementation.
    Rng rng(31);
    const int H = 6, W = 8, D = 64;
    nn::ParamStore<float> store;
    AttentionEngine<float> eng(store, "attn", D, 0.1f, rng);
    make_identity_heads(store, "attn", D);

    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng, -0.5f, 0.5f);
    const Tensor<float> beta = random_tensor<float>(H, W, D, rng, -0.5f, 0.5f);
    const ReceptiveFieldMap rf = row_rf(W, H);

    const Tensor<float> u = eng.forward(alpha, {&beta}, {&rf});
    REQUIRE(u.depth == 2 * D);

    std::vector<const Tensor<float>*> ks{&beta}, vs{&beta};
    std::vector<const ReceptiveFieldMap*> rfs{&rf};
    const Tensor<float> want = brute_c3<float>(alpha, alpha, ks, vs, rfs, 1.0f);
    CHECK(max_abs_diff(u, want) < 1e-6);
}

TEST_CASE("engine with identity heads matches the oracle for mixed-shape views") {
    Rng rng(32);
    const int H = 4, W = 5, D = 8;
    nn::ParamStore<float> store;
    AttentionEngine<float> eng(store, "attn", D, 0.1f, rng);
    make_identity_heads(store, "attn", D);

    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng);
    std::vector<Tensor<float>> betas{random_tensor<float>(3, 7, D, rng),
                                     random_tensor<float>(6, 2, D, rng)};
    std::vector<ReceptiveFieldMap> rfS{random_rf(W, H, 7, 3, 4, rng), full_rf(W, H, 2, 6)};
    const Tensor<float> u = eng.forward(alpha, {&betas[0], &betas[1]}, {&rfS[0], &rfS[1]});

    std::vector<const Tensor<float>*> ks{&betas[0], &betas[1]}, vs = ks;
    std::vector<const ReceptiveFieldMap*> rfs{&rfS[0], &rfS[1]};
    const Tensor<float> want = brute_c3<float>(alpha, alpha, ks, vs, rfs, 1.0f);
    CHECK(max_abs_diff(u, want) < 1e-6);
}

TEST_CASE("engine forward: block 0 is the alpha feature and weights normalize") {
    Rng rng(33);
    const int H = 5, W = 4, D = 6;
    nn::ParamStore<float> store;
    AttentionEngine<float> eng(store, "attn", D, 0.1f, rng);
    CHECK(eng.depth() == D);

    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng);
    const Tensor<float> beta = random_tensor<float>(4, 6, D, rng);
    const ReceptiveFieldMap rf = random_rf(W, H, 6, 4, 5, rng);
    const Tensor<float> u = eng.forward(alpha, {&beta}, {&rf});

    REQUIRE(u.height == H);
    REQUIRE(u.width == W);
    REQUIRE(u.depth == 2 * D);
    for (std::size_t j = 0; j < alpha.voxels(); ++j)
        for (int d = 0; d < D; ++d) CHECK(u.voxel(j)[d] == alpha.voxel(j)[d]);

    const Tensor<float>& w = eng.last_weights(0);
    REQUIRE(w.depth == int(rf.n));
    for (std::size_t j = 0; j < rf.rows(); ++j) {
        double sum = 0;
        for (std::uint32_t s = 0; s < rf.n; ++s) {
            if (!rf.valid_at(j, s))
                CHECK(w.voxel(j)[s] == 0.0f);
            else
                CHECK(w.voxel(j)[s] > 0.0f);
            sum += w.voxel(j)[s];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(eng.last_query().voxels() == alpha.voxels());
}

TEST_CASE("scaled attention divides scores by sqrt(D)") {
    Rng rng(34);
    const int H = 3, W = 3, D = 16;
    const Tensor<double> alpha = random_tensor<double>(H, W, D, rng);
    const Tensor<double> beta = random_tensor<double>(H, W, D, rng);
    const ReceptiveFieldMap rf = row_rf(W, H);

    // Identity heads in both engines; only the scaling flag differs.
    nn::ParamStore<double> s1, s2;
    Rng r1(35), r2(35);
    AttentionEngine<double> plain(s1, "attn", D, 0.1, r1, false);
    AttentionEngine<double> scaled(s2, "attn", D, 0.1, r2, true);
    make_identity_heads(s1, "attn", D);
    make_identity_heads(s2, "attn", D);

    const Tensor<double> uPlain = plain.forward(alpha, {&beta}, {&rf});
    const Tensor<double> uScaled = scaled.forward(alpha, {&beta}, {&rf});

    std::vector<const Tensor<double>*> ks{&beta}, vs{&beta};
    std::vector<const ReceptiveFieldMap*> rfs{&rf};
    const Tensor<double> wantScaled = brute_c3<double>(alpha, alpha, ks, vs, rfs, 1.0 / 4.0);
    CHECK(max_abs_diff(uScaled, wantScaled) < 1e-12);
    // The flag must change the mixture (scores here are far from uniform).
    CHECK(max_abs_diff(uPlain, uScaled) > 1e-4);
}

TEST_CASE("duplicated beta views yield identical blocks and symmetric grads") {
    Rng rng(36);
    const int H = 4, W = 4, D = 4;
    nn::ParamStore<double> store;
    AttentionEngine<double> eng(store, "attn", D, 0.1, rng);

    const Tensor<double> alpha = random_tensor<double>(H, W, D, rng);
    const Tensor<double> beta = random_tensor<double>(4, 5, D, rng);
    const ReceptiveFieldMap rf = random_rf(W, H, 5, 4, 3, rng);

    const Tensor<double> u = eng.forward(alpha, {&beta, &beta}, {&rf, &rf});
    REQUIRE(u.depth == 3 * D);
    for (std::size_t j = 0; j < u.voxels(); ++j)
        for (int d = 0; d < D; ++d) CHECK(u.voxel(j)[D + d] == u.voxel(j)[2 * D + d]);

    // Equal upstream blocks for the two views: the per-view gradient
    // pipelines are identical, so the beta gradients must coincide.
    Tensor<double> up(H, W, 3 * D);
    for (std::size_t j = 0; j < up.voxels(); ++j)
        for (int d = 0; d < D; ++d) {
            up.voxel(j)[d] = rng.uniform(-1.0, 1.0);
            up.voxel(j)[D + d] = up.voxel(j)[2 * D + d] = rng.uniform(-1.0, 1.0);
        }
    const AttentionGrads<double> g = eng.backward(up);
    REQUIRE(g.betas.size() == 2);
    CHECK(max_abs_diff(g.betas[0], g.betas[1]) == 0.0);
}

TEST_CASE("permuting the beta views permutes the output blocks") {
    Rng rng(37);
    const int H = 3, W = 4, D = 5, m = 3;
    nn::ParamStore<double> store;
    AttentionEngine<double> eng(store, "attn", D, 0.1, rng);

    const Tensor<double> alpha = random_tensor<double>(H, W, D, rng);
    std::vector<Tensor<double>> betas;
    std::vector<ReceptiveFieldMap> maps;
    for (int i = 0; i < m; ++i) {
        betas.push_back(random_tensor<double>(3 + i, 4, D, rng));
        maps.push_back(random_rf(W, H, 4, 3 + i, 3, rng));
    }

    const Tensor<double> u =
        eng.forward(alpha, {&betas[0], &betas[1], &betas[2]}, {&maps[0], &maps[1], &maps[2]});
    const int perm[m] = {2, 0, 1};
    const Tensor<double> uP =
        eng.forward(alpha, {&betas[2], &betas[0], &betas[1]}, {&maps[2], &maps[0], &maps[1]});

    for (std::size_t j = 0; j < u.voxels(); ++j) {
        for (int d = 0; d < D; ++d) CHECK(uP.voxel(j)[d] == u.voxel(j)[d]);
        for (int i = 0; i < m; ++i)
            for (int d = 0; d < D; ++d)
                CHECK(uP.voxel(j)[(i + 1) * D + d] == u.voxel(j)[(perm[i] + 1) * D + d]);
    }
}

TEST_CASE("engine rejects mismatched inputs") {
    Rng rng(38);
    const int D = 4;
    nn::ParamStore<float> store;
    AttentionEngine<float> eng(store, "attn", D, 0.1f, rng);

    const Tensor<float> alpha = random_tensor<float>(3, 3, D, rng);
    const Tensor<float> beta = random_tensor<float>(3, 3, D, rng);
    const ReceptiveFieldMap rf = full_rf(3, 3, 3, 3);

    CHECK_THROWS_AS((void)eng.forward(alpha, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS((void)eng.forward(alpha, {&beta}, {}), std::invalid_argument);
    const Tensor<float> thin = random_tensor<float>(3, 3, D - 1, rng);
    CHECK_THROWS_AS((void)eng.forward(thin, {&beta}, {&rf}), std::invalid_argument);
    CHECK_THROWS_AS((void)eng.forward(alpha, {&thin}, {&rf}), std::invalid_argument);
    const ReceptiveFieldMap wrong = full_rf(3, 3, 2, 3);
    CHECK_THROWS_AS((void)eng.forward(alpha, {&beta}, {&wrong}), std::invalid_argument);

    CHECK_THROWS_AS((void)eng.backward(Tensor<float>(3, 3, 2 * D)), std::runtime_error);
    (void)eng.forward(alpha, {&beta}, {&rf});
    CHECK_THROWS_AS((void)eng.backward(Tensor<float>(3, 3, D)), std::invalid_argument);
    CHECK_THROWS_AS((void)eng.backward(Tensor<float>(2, 3, 2 * D)), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// AttentionEngine backward
// ---------------------------------------------------------------------------

namespace {

/// Central-difference check of every head parameter plus all input features
/// for a random engine configuration; loss is a fixed random projection of U.
double engine_grad_check(std::uint64_t seed, int m, bool scaled) {
    Rng rng(seed);
    const int H = 4, W = 4, D = 4;
    nn::ParamStore<double> store;
    AttentionEngine<double> eng(store, "attn", D, 0.1, rng, scaled);

    Tensor<double> alpha = random_tensor<double>(H, W, D, rng);
    std::vector<Tensor<double>> betas;
    std::vector<ReceptiveFieldMap> maps;
    for (int i = 0; i < m; ++i) {
        const int bH = (i == 0) ? 4 : 5, bW = (i == 0) ? 4 : 3;
        betas.push_back(random_tensor<double>(bH, bW, D, rng));
        maps.push_back(random_rf(W, H, bW, bH, 3, rng));
    }
    std::vector<const Tensor<double>*> betaPtrs;
    std::vector<const ReceptiveFieldMap*> mapPtrs;
    for (int i = 0; i < m; ++i) {
        betaPtrs.push_back(&betas[i]);
        mapPtrs.push_back(&maps[i]);
    }

    Tensor<double> coef(H, W, (m + 1) * D);
    for (auto& v : coef.values) v = rng.uniform(-1.0, 1.0);
    auto loss = [&] {
        const Tensor<double> u = eng.forward(alpha, betaPtrs, mapPtrs);
        double acc = 0;
        for (std::size_t t = 0; t < u.size(); ++t) acc += coef.values[t] * u.values[t];
        return acc;
    };

    (void)loss();
    store.zero_grads();
    const AttentionGrads<double> g = eng.backward(coef);

    std::vector<nn::GradCheckItem<double>> items = nn::store_check_items(store);
    items.push_back({"alpha", alpha.values.data(), g.alpha.values.data(), alpha.size()});
    for (int i = 0; i < m; ++i)
        items.push_back({"beta" + std::to_string(i), betas[i].values.data(),
                         g.betas[i].values.data(), betas[i].size()});
    return nn::grad_check<double>(items, loss).maxRelError;
}

} // namespace

TEST_CASE("engine gradients match central differences across seeds") {
    for (const std::uint64_t seed : {101, 202, 303}) {
        CAPTURE(seed);
        CHECK(engine_grad_check(seed, 1, false) < 1e-4);
    }
    CHECK(engine_grad_check(404, 2, false) < 1e-4);
    CHECK(engine_grad_check(505, 1, true) < 1e-4);
}

TEST_CASE("zero upstream gradient produces zero gradients everywhere") {
    Rng rng(39);
    const int H = 3, W = 3, D = 4;
    nn::ParamStore<double> store;
    AttentionEngine<double> eng(store, "attn", D, 0.1, rng);

    const Tensor<double> alpha = random_tensor<double>(H, W, D, rng);
    const Tensor<double> beta = random_tensor<double>(3, 4, D, rng);
    const ReceptiveFieldMap rf = random_rf(W, H, 4, 3, 3, rng);
    (void)eng.forward(alpha, {&beta}, {&rf});

    store.zero_grads();
    const AttentionGrads<double> g = eng.backward(Tensor<double>(H, W, 2 * D));
    for (const double v : g.alpha.values) CHECK(v == 0.0);
    for (const double v : g.betas[0].values) CHECK(v == 0.0);
    for (const auto& [name, p] : store.named()) {
        CAPTURE(name);
        double worst = 0;
        for (const double v : p->grad) worst = std::max(worst, std::abs(v));
        CHECK(worst == 0.0);
    }
}

// ---------------------------------------------------------------------------
// patched inference
// ---------------------------------------------------------------------------

TEST_CASE("patched inference equals the full forward for any tiling") {
    Rng rng(40);
    const int H = 13, W = 17, D = 6;
    nn::ParamStore<float> store;
    AttentionEngine<float> eng(store, "attn", D, 0.1f, rng);

    const Tensor<float> alpha = random_tensor<float>(H, W, D, rng);
    std::vector<Tensor<float>> betas{random_tensor<float>(9, 11, D, rng),
                                     random_tensor<float>(13, 17, D, rng)};
    std::vector<ReceptiveFieldMap> maps{random_rf(W, H, 11, 9, 4, rng),
                                        random_rf(W, H, 17, 13, 4, rng)};
    std::vector<const Tensor<float>*> betaPtrs{&betas[0], &betas[1]};
    std::vector<const ReceptiveFieldMap*> mapPtrs{&maps[0], &maps[1]};

    const Tensor<float> full = eng.forward(alpha, betaPtrs, mapPtrs);
    const int tilings[][2] = {{H, W}, {1, 1}, {4, 5}, {3, 17}, {13, 4}};
    for (const auto& t : tilings) {
        CAPTURE(t[0]);
        CAPTURE(t[1]);
        const Tensor<float> patched = eng.patched_inference(alpha, betaPtrs, mapPtrs, t[0], t[1]);
        CHECK(max_abs_diff(patched, full) < 1e-6);
    }

    CHECK_THROWS_AS((void)eng.patched_inference(alpha, betaPtrs, mapPtrs, 0, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)eng.patched_inference(alpha, betaPtrs, mapPtrs, H + 1, W),
                    std::invalid_argument);

    // The patched path is inference-only: no training cache is kept.
    (void)eng.patched_inference(alpha, betaPtrs, mapPtrs, 4, 4);
    CHECK_THROWS_AS((void)eng.backward(Tensor<float>(H, W, 3 * D)), std::runtime_error);
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

TEST_CASE("bench_attention fills a row and the CSV schema matches") {
    const BenchRow row = bench_attention(2, 8, 16, 4, 6, 8, 3, 7);
    CHECK(row.m == 2);
    CHECK(row.height == 8);
    CHECK(row.width == 16);
    CHECK(row.depth == 4);
    CHECK(row.L == 6);
    CHECK(row.n == 8);
    CHECK(row.runs == 3);
    CHECK(row.millisMean > 0.0);
    CHECK(row.millisStd >= 0.0);

    CHECK(bench_csv_header() == "m,H,W,D,L,n,millis_mean,millis_std,runs");
    const std::string line = bench_csv_row(row);
    CHECK(line.rfind("2,8,16,4,6,8,", 0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 8);

    const std::string table = bench_csv({row, row});
    std::istringstream is(table);
    std::string first;
    std::getline(is, first);
    CHECK(first == bench_csv_header());
    int lines = 1;
    for (std::string s; std::getline(is, s);) ++lines;
    CHECK(lines == 3);

    CHECK_THROWS_AS((void)bench_attention(0, 8, 8, 4, 4, 4, 1, 7), std::invalid_argument);
    CHECK_THROWS_AS((void)bench_attention(1, 8, 8, 4, 6, 4, 1, 7), std::invalid_argument);
}
