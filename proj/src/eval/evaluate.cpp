/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/eval/evaluate.hpp"

#include "pat/data/dataset.hpp"
#include "pat/geom/epipolar.hpp"
#include "pat/io/image_io.hpp"
#include "pat/nn/ops.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pat::eval {

namespace fs = std::filesystem;

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

nlohmann::json metric_json(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? nlohmann::json() : nlohmann::json(v > 0 ? "inf" : "-inf");
}

nlohmann::json column_json(const EvalColumn& c) {
    nlohmann::json j;
    j["psnr"] = metric_json(c.mean_psnr());
    j["ssim"] = metric_json(c.mean_ssim());
    nlohmann::json ps = nlohmann::json::array(), ss = nlohmann::json::array();
    for (double v : c.psnrValues) ps.push_back(metric_json(v));
    for (double v : c.ssimValues) ss.push_back(metric_json(v));
    j["per_sample_psnr"] = ps;
    j["per_sample_ssim"] = ss;
    return j;
}

nn::Tensor<float> degrade_beta(const nn::Tensor<float>& beta, int scale) {
    if (scale == 1) return beta;
    const int w = std::max(1, beta.width / scale);
    const int h = std::max(1, beta.height / scale);
    nn::Tensor<float> low = nn::bicubic_resample(beta, w, h);
    return nn::clamp01(nn::bicubic_resample(low, beta.width, beta.height));
}

nn::Tensor<float> as_rgb(const nn::Tensor<float>& img) {
    return img.depth == 3 ? img : nn::repeat_channels(img, 3);
}

} // namespace

double EvalColumn::mean_psnr() const { return mean_of(psnrValues); }
double EvalColumn::mean_ssim() const { return mean_of(ssimValues); }

FrameScores evaluate_frame(net::PatModel<float>& model, const nn::Tensor<float>& truth,
                           const nn::Tensor<float>& beta, const geom::ReceptiveFieldMap& rf,
                           int scale) {
    if (scale != 1 && scale != 2 && scale != 4)
        throw std::invalid_argument("evaluate: scale must be 1, 2 or 4");
    const nn::Tensor<float> truthRgb = as_rgb(truth);
    const nn::Tensor<float> gray =
        truth.depth == 1 ? truth : nn::grayscale(truth);
    const nn::Tensor<float> degraded = degrade_beta(as_rgb(beta), scale);

    const int m = model.config().viewCount;
    std::vector<nn::Tensor<float>> betaViews;
    if (m == 1) {
        betaViews.push_back(degraded);
    } else if (m == 3) {
        betaViews = net::unpack_channels(degraded);
    } else {
        throw std::invalid_argument("evaluate: model view count must be 1 or 3");
    }
    std::vector<const nn::Tensor<float>*> betaPtrs;
    std::vector<const geom::ReceptiveFieldMap*> rfs;
    for (const auto& v : betaViews) {
        betaPtrs.push_back(&v);
        rfs.push_back(&rf);
    }
    const nn::Tensor<float> fused = nn::clamp01(model.forward(gray, betaPtrs, rfs));

    FrameScores s;
    const nn::Tensor<float> alphaRgb = nn::repeat_channels(gray, 3);
    s.alphaPsnr = psnr(alphaRgb, truthRgb);
    s.alphaSsim = ssim(alphaRgb, truthRgb);
    s.betaPsnr = psnr(degraded, truthRgb);
    s.betaSsim = ssim(degraded, truthRgb);
    s.fusionPsnr = psnr(fused, truthRgb);
    s.fusionSsim = ssim(fused, truthRgb);
    return s;
}

namespace {

void append(EvalReport& report, const std::string& id, const FrameScores& s) {
    report.ids.push_back(id);
    report.alphaInput.psnrValues.push_back(s.alphaPsnr);
    report.alphaInput.ssimValues.push_back(s.alphaSsim);
    report.betaInput.psnrValues.push_back(s.betaPsnr);
    report.betaInput.ssimValues.push_back(s.betaSsim);
    report.fusion.psnrValues.push_back(s.fusionPsnr);
    report.fusion.ssimValues.push_back(s.fusionSsim);
}

EvalReport eval_synthetic(net::PatModel<float>& model, const std::string& dataDir,
                          const EvalOptions& options) {
    const data::DatasetManifest m = data::load_manifest(dataDir);
    const data::DatasetConfig& cfg = m.config;
    if (cfg.valSceneCount < 1)
        throw std::runtime_error("evaluate: dataset has no validation scenes (ground truth)");
    const std::uint32_t n = options.rfSlots ? options.rfSlots : cfg.frameRfSlots;
    const geom::ReceptiveFieldMap rf = geom::epipolar_rf(m.camA, m.camB, n, cfg.rf_range());

    EvalReport report;
    report.protocol = "synthetic";
    report.scale = options.scale;
    for (int si = cfg.sceneCount - cfg.valSceneCount; si < cfg.sceneCount; ++si) {
        char name[16];
        std::snprintf(name, sizeof name, "%04d", si);
        const fs::path sceneDir = fs::path(dataDir) / "scenes" / name;
        if (!fs::exists(sceneDir / "camA.png"))
            throw std::runtime_error("evaluate: missing ground truth frame " +
                                     (sceneDir / "camA.png").string());
        const nn::Tensor<float> truth = io::load_png((sceneDir / "camA.png").string());
        const nn::Tensor<float> beta = io::load_png((sceneDir / "camB.png").string());
        append(report, name, evaluate_frame(model, truth, beta, rf, options.scale));
    }
    return report;
}

EvalReport eval_stereo_dir(net::PatModel<float>& model, const std::string& dataDir,
                           const EvalOptions& options) {
    const fs::path leftDir = fs::path(dataDir) / "left";
    const fs::path rightDir = fs::path(dataDir) / "right";
    if (!fs::is_directory(leftDir) || !fs::is_directory(rightDir))
        throw std::runtime_error("evaluate: stereo-dir needs left/ and right/ under " + dataDir);
    std::vector<fs::path> lefts;
    for (const auto& e : fs::directory_iterator(leftDir))
        if (e.path().extension() == ".png") lefts.push_back(e.path());
    std::sort(lefts.begin(), lefts.end());
    if (lefts.empty()) throw std::runtime_error("evaluate: no left/*.png frames in " + dataDir);

    EvalReport report;
    report.protocol = "stereo-dir";
    report.scale = options.scale;
    std::map<std::pair<int, int>, geom::ReceptiveFieldMap> rfCache;
    for (const fs::path& leftPath : lefts) {
        const fs::path rightPath = rightDir / leftPath.filename();
        if (!fs::exists(rightPath))
            throw std::runtime_error("evaluate: missing right frame for " + leftPath.string());
        const nn::Tensor<float> truth = io::load_png(leftPath.string());
        const nn::Tensor<float> beta = io::load_png(rightPath.string());
        if (truth.height != beta.height || truth.width != beta.width)
            throw std::runtime_error("evaluate: left/right size mismatch for " +
                                     leftPath.string());
        const auto key = std::make_pair(truth.width, truth.height);
        auto it = rfCache.find(key);
        if (it == rfCache.end()) {
            const std::uint32_t n =
                options.rfSlots ? options.rfSlots
                                : std::min<std::uint32_t>(options.maxDisparity + 1, 96);
            it = rfCache
                     .emplace(key, geom::horizontal_rf(std::uint32_t(truth.width),
                                                       std::uint32_t(truth.height),
                                                       options.maxDisparity, n))
                     .first;
        }
        append(report, leftPath.stem().string(),
               evaluate_frame(model, truth, beta, it->second, options.scale));
    }
    return report;
}

} // namespace

EvalReport evaluate(net::PatModel<float>& model, const std::string& dataDir,
                    const EvalOptions& options) {
    if (options.protocol == "synthetic") return eval_synthetic(model, dataDir, options);
    if (options.protocol == "stereo-dir") return eval_stereo_dir(model, dataDir, options);
    throw std::invalid_argument("evaluate: unknown protocol '" + options.protocol + "'");
}

std::string EvalReport::csv() const {
    std::ostringstream out;
    out << "id,alpha_psnr,alpha_ssim,beta_psnr,beta_ssim,fusion_psnr,fusion_ssim\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << ',' << fmt(alphaInput.psnrValues[i]) << ','
            << fmt(alphaInput.ssimValues[i]) << ',' << fmt(betaInput.psnrValues[i]) << ','
            << fmt(betaInput.ssimValues[i]) << ',' << fmt(fusion.psnrValues[i]) << ','
            << fmt(fusion.ssimValues[i]) << '\n';
    }
    out << "mean," << fmt(alphaInput.mean_psnr()) << ',' << fmt(alphaInput.mean_ssim()) << ','
        << fmt(betaInput.mean_psnr()) << ',' << fmt(betaInput.mean_ssim()) << ','
        << fmt(fusion.mean_psnr()) << ',' << fmt(fusion.mean_ssim()) << '\n';
    return out.str();
}

std::string EvalReport::json_text() const {
    nlohmann::json j;
    j["protocol"] = protocol;
    j["scale"] = scale;
    j["ids"] = ids;
    j["columns"] = {{"alpha_input", column_json(alphaInput)},
                    {"beta_input", column_json(betaInput)},
                    {"fusion", column_json(fusion)}};
    return j.dump(2);
}

} // namespace pat::eval
