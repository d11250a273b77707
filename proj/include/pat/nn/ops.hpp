/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace pat::nn {

template <typename T>
inline T leaky_relu(T x, T slope) {
    return x > T(0) ? x : slope * x;
}

template <typename T>
inline T leaky_relu_grad(T x, T slope) {
    return x > T(0) ? T(1) : slope;
}

/// Numerically stable softmax (max subtraction), written in place.
/// Shift-invariant by construction. Throws on an empty score vector.
template <typename T>
void softmax_inplace(std::span<T> scores) {
    if (scores.empty()) throw std::invalid_argument("softmax: empty score vector");
    T maxScore = scores[0];
    for (T s : scores) maxScore = std::max(maxScore, s);
    T sum = 0;
    for (T& s : scores) {
        s = std::exp(s - maxScore);
        sum += s;
    }
    for (T& s : scores) s /= sum;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& scores) {
    std::vector<T> out = scores;
    softmax_inplace(std::span<T>(out));
    return out;
}

/// BT.601 luminance. Input must have 3 channels; output has 1.
template <typename T>
Tensor<T> grayscale(const Tensor<T>& rgb) {
    if (rgb.depth != 3) throw std::invalid_argument("grayscale: expected 3 channels");
    Tensor<T> out(rgb.height, rgb.width, 1);
    for (std::size_t j = 0; j < rgb.voxels(); ++j) {
        const T* p = rgb.voxel(j);
        out.values[j] = T(0.299) * p[0] + T(0.587) * p[1] + T(0.114) * p[2];
    }
    return out;
}

template <typename T>
Tensor<T> repeat_channels(const Tensor<T>& mono, int channels) {
    if (mono.depth != 1) throw std::invalid_argument("repeat_channels: expected 1 channel");
    Tensor<T> out(mono.height, mono.width, channels);
    for (std::size_t j = 0; j < mono.voxels(); ++j)
        for (int c = 0; c < channels; ++c) out.voxel(j)[c] = mono.values[j];
    return out;
}

namespace detail {

// Catmull-Rom kernel (cubic with a = -0.5).
template <typename T>
inline T cubic_weight(T t) {
    const T a = T(-0.5);
    t = std::abs(t);
    if (t <= T(1)) return ((a + T(2)) * t - (a + T(3))) * t * t + T(1);
    if (t < T(2)) return (((t - T(5)) * t + T(8)) * t - T(4)) * a;
    return T(0);
}

} // namespace detail

/// Separable bicubic resampling with clamped borders. Identity dimensions
/// return an exact copy. Sample positions follow the pixel-center
/// convention: src = (dst + 0.5) * srcSize / dstSize - 0.5.
template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& img, int outWidth, int outHeight) {
    if (outWidth < 1 || outHeight < 1)
        throw std::invalid_argument("bicubic_resample: output dims must be >= 1");
    if (outWidth == img.width && outHeight == img.height) return img;

    const int C = img.depth;
    // Horizontal pass, then vertical.
    Tensor<T> mid(img.height, outWidth, C);
    const double sx = double(img.width) / outWidth;
    for (int x = 0; x < outWidth; ++x) {
        const double src = (x + 0.5) * sx - 0.5;
        const int base = int(std::floor(src));
        T w[4];
        for (int k = 0; k < 4; ++k) w[k] = detail::cubic_weight(T(src - (base - 1 + k)));
        for (int y = 0; y < img.height; ++y) {
            for (int c = 0; c < C; ++c) {
                T acc = 0;
                for (int k = 0; k < 4; ++k) {
                    int ix = std::clamp(base - 1 + k, 0, img.width - 1);
                    acc += w[k] * img.at(y, ix, c);
                }
                mid.at(y, x, c) = acc;
            }
        }
    }
    Tensor<T> out(outHeight, outWidth, C);
    const double sy = double(img.height) / outHeight;
    for (int y = 0; y < outHeight; ++y) {
        const double src = (y + 0.5) * sy - 0.5;
        const int base = int(std::floor(src));
        T w[4];
        for (int k = 0; k < 4; ++k) w[k] = detail::cubic_weight(T(src - (base - 1 + k)));
        for (int x = 0; x < outWidth; ++x) {
            for (int c = 0; c < C; ++c) {
                T acc = 0;
                for (int k = 0; k < 4; ++k) {
                    int iy = std::clamp(base - 1 + k, 0, img.height - 1);
                    acc += w[k] * mid.at(iy, x, c);
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

/// Normalized square box filter with replicated borders. Kernel size must
/// be odd.
template <typename T>
Tensor<T> box_blur(const Tensor<T>& img, int kernelSize) {
    if (kernelSize < 1 || kernelSize % 2 == 0)
        throw std::invalid_argument("box_blur: kernel size must be odd and >= 1");
    const int r = kernelSize / 2;
    const T norm = T(1) / T(kernelSize * kernelSize);
    Tensor<T> out(img.height, img.width, img.depth);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.depth; ++c) {
                T acc = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        int iy = std::clamp(y + dy, 0, img.height - 1);
                        int ix = std::clamp(x + dx, 0, img.width - 1);
                        acc += img.at(iy, ix, c);
                    }
                out.at(y, x, c) = acc * norm;
            }
    return out;
}

/// Depth-wise concatenation of same-resolution tensors.
template <typename T>
Tensor<T> concat_depth(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_depth: nothing to concatenate");
    int d = 0;
    for (auto* p : parts) {
        if (p->height != parts[0]->height || p->width != parts[0]->width)
            throw std::invalid_argument("concat_depth: spatial dims differ");
        d += p->depth;
    }
    Tensor<T> out(parts[0]->height, parts[0]->width, d);
    for (std::size_t j = 0; j < out.voxels(); ++j) {
        T* dst = out.voxel(j);
        for (auto* p : parts) {
            const T* src = p->voxel(j);
            dst = std::copy(src, src + p->depth, dst);
        }
    }
    return out;
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& img) {
    Tensor<T> out = img;
    for (T& v : out.values) v = std::clamp(v, T(0), T(1));
    return out;
}

} // namespace pat::nn
