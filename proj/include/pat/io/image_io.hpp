/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/nn/tensor.hpp"

#include <string>

namespace pat::io {

/// Writes an H x W x {1,3} tensor of [0, 1] floats as an 8-bit gray or RGB
/// PNG. Values are clamped and rounded to the nearest of 256 levels.
void save_png(const nn::Tensor<float>& image, const std::string& path);

/// Loads an 8-bit PNG as [0, 1] floats. Gray images load with depth 1,
/// color with depth 3 (palette/alpha inputs are expanded / stripped).
nn::Tensor<float> load_png(const std::string& path);

/// Raw float container for depth maps and other full-precision planes:
/// magic "PATIMG1\0", then height, width, depth as u32 LE, then f32 LE
/// values in depth-innermost order.
void save_float_image(const nn::Tensor<float>& image, const std::string& path);
nn::Tensor<float> load_float_image(const std::string& path);

} // namespace pat::io
