/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pat::nn {

/// H x W x D grid of scalars with the depth dimension innermost. A "voxel"
/// is the D-length vector at one spatial site; voxel j refers to the
/// row-major flat spatial index j = y * W + x.
template <typename T>
struct Tensor {
    int height = 0, width = 0, depth = 0;
    std::vector<T> values;

    Tensor() = default;
    Tensor(int h, int w, int d) : height(h), width(w), depth(d) {
        if (h < 0 || w < 0 || d < 0) throw std::invalid_argument("Tensor: negative dimension");
        values.assign(std::size_t(h) * w * d, T(0));
    }

    std::size_t size() const { return values.size(); }
    std::size_t voxels() const { return std::size_t(height) * width; }

    T& at(int y, int x, int d) { return values[(std::size_t(y) * width + x) * depth + d]; }
    const T& at(int y, int x, int d) const {
        return values[(std::size_t(y) * width + x) * depth + d];
    }

    T* voxel(std::size_t j) { return values.data() + j * depth; }
    const T* voxel(std::size_t j) const { return values.data() + j * depth; }

    bool same_shape(const Tensor& o) const {
        return height == o.height && width == o.width && depth == o.depth;
    }

    void fill(T v) { std::fill(values.begin(), values.end(), v); }

    bool all_finite() const {
        for (T v : values)
            if (!std::isfinite(double(v))) return false;
        return true;
    }
};

template <typename T>
using Feature = Tensor<T>;

/// Images reuse the tensor layout with depth = channel count and values
/// normalized to [0, 1].
using Image = Tensor<float>;

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
    Tensor<U> out(t.height, t.width, t.depth);
    for (std::size_t i = 0; i < t.size(); ++i) out.values[i] = U(t.values[i]);
    return out;
}

} // namespace pat::nn
