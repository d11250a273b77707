/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/nn/ops.hpp"
#include "pat/nn/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pat::eval {

using nn::Tensor;

/// Peak signal-to-noise ratio in dB; +infinity for identical images.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: image dims differ");
    if (peak <= 0) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.values[i]) - double(b.values[i]);
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(std::size_t(size) * size);
    const int r = size / 2;
    double total = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - r, dx = x - r;
            const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            w[std::size_t(y) * size + x] = v;
            total += v;
        }
    for (double& v : w) v /= total;
    return w;
}

} // namespace detail

/// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
/// averaged over all full-window positions. RGB inputs are converted to
/// luminance first.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: image dims differ");
    const Tensor<T> ga = a.depth == 3 ? nn::grayscale(a) : a;
    const Tensor<T> gb = b.depth == 3 ? nn::grayscale(b) : b;
    if (ga.depth != 1) throw std::invalid_argument("ssim: expected 1 or 3 channels");
    constexpr int kWindow = 11;
    if (ga.height < kWindow || ga.width < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    static const std::vector<double> w = detail::gaussian_window(kWindow, 1.5);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    double total = 0;
    std::size_t count = 0;
    for (int y = 0; y + kWindow <= ga.height; ++y)
        for (int x = 0; x + kWindow <= ga.width; ++x) {
            double muA = 0, muB = 0, sqA = 0, sqB = 0, prod = 0;
            for (int wy = 0; wy < kWindow; ++wy)
                for (int wx = 0; wx < kWindow; ++wx) {
                    const double wt = w[std::size_t(wy) * kWindow + wx];
                    const double va = double(ga.at(y + wy, x + wx, 0));
                    const double vb = double(gb.at(y + wy, x + wx, 0));
                    muA += wt * va;
                    muB += wt * vb;
                    sqA += wt * va * va;
                    sqB += wt * vb * vb;
                    prod += wt * va * vb;
                }
            const double varA = sqA - muA * muA;
            const double varB = sqB - muB * muB;
            const double cov = prod - muA * muB;
            total += ((2 * muA * muB + c1) * (2 * cov + c2)) /
                     ((muA * muA + muB * muB + c1) * (varA + varB + c2));
            ++count;
        }
    return total / double(count);
}

} // namespace pat::eval
