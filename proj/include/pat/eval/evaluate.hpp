/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/eval/metrics.hpp"
#include "pat/geom/receptive_field.hpp"
#include "pat/net/model.hpp"

#include <string>
#include <vector>

namespace pat::eval {

/// One metric column of the three-way comparison (values per sample).
struct EvalColumn {
    std::vector<double> psnrValues;
    std::vector<double> ssimValues;
    double mean_psnr() const;
    double mean_ssim() const;
};

/// Whole-frame comparison table: every column is scored against the alpha
/// ground truth. "Alpha Input" is the grayscale alpha frame the model sees,
/// "Beta Input" the (possibly bicubically degraded and restored) beta frame,
/// "Fusion" the model output.
struct EvalReport {
    std::vector<std::string> ids;
    EvalColumn alphaInput, betaInput, fusion;
    std::string protocol = "synthetic";
    int scale = 1;

    std::string csv() const;
    std::string json_text() const;
};

struct EvalOptions {
    std::string protocol = "synthetic"; // or "stereo-dir"
    int scale = 1;                      // 1, 2 or 4: beta downsample factor
    std::uint32_t rfSlots = 0;          // 0 = protocol default
    std::uint32_t maxDisparity = 64;    // stereo-dir receptive-field reach
};

struct FrameScores {
    double alphaPsnr = 0, alphaSsim = 0;
    double betaPsnr = 0, betaSsim = 0;
    double fusionPsnr = 0, fusionSsim = 0;
};

/// Scores one frame: degrades beta per `scale` (bicubic down + up), feeds
/// the grayscale alpha plus the degraded beta through the model, and
/// computes the three columns against `truth`.
FrameScores evaluate_frame(net::PatModel<float>& model, const nn::Tensor<float>& truth,
                           const nn::Tensor<float>& beta, const geom::ReceptiveFieldMap& rf,
                           int scale);

/// Protocol driver. "synthetic" walks the validation scenes of a dataset
/// directory produced by build_dataset; "stereo-dir" walks `left/*.png` /
/// `right/*.png` rectified pairs (Flickr1024/KITTI directory convention)
/// using a horizontal receptive field. Throws when ground truth is missing.
EvalReport evaluate(net::PatModel<float>& model, const std::string& dataDir,
                    const EvalOptions& options = {});

} // namespace pat::eval
