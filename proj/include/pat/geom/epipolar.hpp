/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/geom/camera.hpp"
#include "pat/geom/receptive_field.hpp"

namespace pat::geom {

/// Fundamental matrix mapping homogeneous pixels of camA to epipolar lines
/// in camB: xB^T * F * xA = 0 for any world point seen by both cameras.
/// Throws std::runtime_error when the camera centers coincide (no epipolar
/// geometry exists).
Mat3 fundamental_matrix(const CameraModel& camA, const CameraModel& camB);

/// Depth interval the candidate search covers, in meters along the alpha
/// camera axis. `far` may be infinite. Candidates are placed uniformly in
/// inverse depth, which keeps pixel spacing along the epipolar line
/// approximately uniform (exactly uniform for fronto-parallel motion).
struct DepthRange {
    double near = 0.5;
    double far = 40.0;
};

/// For every alpha pixel, samples `n` integer positions along its epipolar
/// line in camB, spanning `range`. Positions that land outside the beta
/// image or behind the beta camera are marked invalid rather than clamped.
/// A row whose samples are all invalid falls back to the single in-image
/// position closest to the sampled segment so every row keeps at least one
/// valid entry.
ReceptiveFieldMap epipolar_rf(const CameraModel& camA, const CameraModel& camB,
                              std::uint32_t n, const DepthRange& range = {});

/// Truncated variant: the plane-induced homography at `planeDepth` anchors
/// each row, and candidates are every integer step along the epipolar line
/// within +-l pixels of the anchor (at most 2l+1 before resampling). When
/// the in-image candidate count exceeds n the list is strided down to n,
/// keeping both endpoints; otherwise it is padded with invalid slots.
/// A coincident-center pair is legal here: the pure-rotation homography is
/// exact for every depth and the window direction defaults to +x.
ReceptiveFieldMap homography_truncated_rf(const CameraModel& camA, const CameraModel& camB,
                                          double planeDepth, std::uint32_t l, std::uint32_t n);

/// Receptive field for rectified pairs: a horizontal window of `n` pixels
/// ending at each alpha pixel, covering disparities 0..maxDisparity. Used by
/// the stereo-directory evaluation protocol where no calibration exists.
ReceptiveFieldMap horizontal_rf(std::uint32_t width, std::uint32_t height,
                                std::uint32_t maxDisparity, std::uint32_t n);

} // namespace pat::geom
