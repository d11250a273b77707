/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/attn/bench.hpp"

#include "pat/attn/engine.hpp"
#include "pat/core/rng.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pat::attn {

namespace {

/// Full-row style map: every alpha voxel in image row y attends to the first
/// L pixels of beta row y. Slots L..n-1 are invalid padding.
geom::ReceptiveFieldMap bench_map(int height, int width, int betaWidth, int L, int n) {
    geom::ReceptiveFieldMap rf;
    rf.alphaHeight = std::uint32_t(height);
    rf.alphaWidth = std::uint32_t(width);
    rf.betaHeight = std::uint32_t(height);
    rf.betaWidth = std::uint32_t(betaWidth);
    rf.n = std::uint32_t(n);
    rf.indices.assign(rf.slots(), 0);
    rf.valid.assign(rf.slots(), 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t j = std::size_t(y) * width + x;
            for (int s = 0; s < L; ++s) {
                rf.indices[j * n + s] = std::uint32_t(y) * betaWidth + s;
                rf.valid[j * n + s] = 1;
            }
        }
    rf.check();
    return rf;
}

} // namespace

BenchRow bench_attention(int m, int height, int width, int depth, int L, int n, int runs,
                         std::uint64_t seed) {
    if (m < 1 || height < 1 || width < 1 || depth < 1 || L < 1 || n < L || runs < 1)
        throw std::invalid_argument("bench_attention: invalid sizes");

    const int betaWidth = std::max(width, L);
    Rng rng(seed);
    auto fill = [&](nn::Tensor<float>& t) {
        for (float& v : t.values) v = rng.uniform_f(-0.5f, 0.5f);
    };

    nn::Tensor<float> alpha(height, width, depth), q(height, width, depth);
    fill(alpha);
    fill(q);
    std::vector<nn::Tensor<float>> kStore(m), vStore(m);
    std::vector<const nn::Tensor<float>*> ks, vs;
    for (int i = 0; i < m; ++i) {
        kStore[i] = nn::Tensor<float>(height, betaWidth, depth);
        vStore[i] = nn::Tensor<float>(height, betaWidth, depth);
        fill(kStore[i]);
        fill(vStore[i]);
        ks.push_back(&kStore[i]);
        vs.push_back(&vStore[i]);
    }
    geom::ReceptiveFieldMap rf = bench_map(height, width, betaWidth, L, n);
    std::vector<const geom::ReceptiveFieldMap*> rfs(std::size_t(m), &rf);

    nn::Tensor<float> u(height, width, (m + 1) * depth);
    const std::size_t voxels = alpha.voxels();
    auto once = [&] {
        c3_range<float>(alpha, q, ks, vs, rfs, 1.0f, std::size_t(0), voxels, u, nullptr);
    };

    once(); // warmup
    std::vector<double> millis(static_cast<std::size_t>(runs), 0.0);
    for (int r = 0; r < runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        once();
        const auto t1 = std::chrono::steady_clock::now();
        millis[std::size_t(r)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    BenchRow row;
    row.m = m;
    row.height = height;
    row.width = width;
    row.depth = depth;
    row.L = L;
    row.n = n;
    row.runs = runs;
    double sum = 0;
    for (double v : millis) sum += v;
    row.millisMean = sum / runs;
    double var = 0;
    for (double v : millis) var += (v - row.millisMean) * (v - row.millisMean);
    row.millisStd = runs > 1 ? std::sqrt(var / (runs - 1)) : 0.0;
    return row;
}

std::string bench_csv_header() { return "m,H,W,D,L,n,millis_mean,millis_std,runs"; }

std::string bench_csv_row(const BenchRow& r) {
    std::ostringstream os;
    os << r.m << ',' << r.height << ',' << r.width << ',' << r.depth << ',' << r.L << ',' << r.n
       << ',' << r.millisMean << ',' << r.millisStd << ',' << r.runs;
    return os.str();
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << bench_csv_header() << '\n';
    for (const auto& r : rows) os << bench_csv_row(r) << '\n';
    return os.str();
}

} // namespace pat::attn
