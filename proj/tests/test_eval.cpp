/* SPDX-License-Identifier: Apache-2.0 */

// Metric and evaluation-protocol tests. PSNR/SSIM are checked against
// closed forms and against naive reference implementations coded here with
// a different accumulation strategy (long-double MSE, two-pass variance).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pat/core/rng.hpp"
#include "pat/data/dataset.hpp"
#include "pat/eval/evaluate.hpp"
#include "pat/eval/metrics.hpp"
#include "pat/geom/epipolar.hpp"
#include "pat/io/image_io.hpp"
#include "pat/nn/ops.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace pat;
using namespace pat::eval;
using nn::Tensor;

namespace {

std::string temp_dir(const std::string& tag) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("pat_eval_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

Tensor<float> random_image(int h, int w, int d, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor<float> t(h, w, d);
    for (auto& v : t.values) v = float(rng.uniform(lo, hi));
    return t;
}

/// Reference PSNR with long-double accumulation.
double naive_psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
    long double sse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = (long double)(a.values[i]) - (long double)(b.values[i]);
        sse += d * d;
    }
    const long double mse = sse / (long double)(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return double(10.0L * std::log10((long double)(peak) * peak / mse));
}

/// Reference single-scale SSIM: same published constants, but a two-pass
/// (mean, then centered moments) window accumulation.
double naive_ssim(const Tensor<float>& a, const Tensor<float>& b) {
    const Tensor<float> ga = a.depth == 3 ? nn::grayscale(a) : a;
    const Tensor<float> gb = b.depth == 3 ? nn::grayscale(b) : b;
    constexpr int N = 11;
    const double sigma = 1.5;
    std::vector<double> w(N * N);
    double wsum = 0;
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double dy = y - N / 2, dx = x - N / 2;
            w[std::size_t(y) * N + std::size_t(x)] =
                std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += w[std::size_t(y) * N + std::size_t(x)];
        }
    for (double& v : w) v /= wsum;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0;
    int count = 0;
    for (int y0 = 0; y0 + N <= ga.height; ++y0)
        for (int x0 = 0; x0 + N <= ga.width; ++x0) {
            double muA = 0, muB = 0;
            for (int y = 0; y < N; ++y)
                for (int x = 0; x < N; ++x) {
                    const double wt = w[std::size_t(y) * N + std::size_t(x)];
                    muA += wt * ga.at(y0 + y, x0 + x, 0);
                    muB += wt * gb.at(y0 + y, x0 + x, 0);
                }
            double varA = 0, varB = 0, cov = 0;
            for (int y = 0; y < N; ++y)
                for (int x = 0; x < N; ++x) {
                    const double wt = w[std::size_t(y) * N + std::size_t(x)];
                    const double da = ga.at(y0 + y, x0 + x, 0) - muA;
                    const double db = gb.at(y0 + y, x0 + x, 0) - muB;
                    varA += wt * da * da;
                    varB += wt * db * db;
                    cov += wt * da * db;
                }
            total += ((2 * muA * muB + c1) * (2 * cov + c2)) /
                     ((muA * muA + muB * muB + c1) * (varA + varB + c2));
            ++count;
        }
    return total / count;
}

net::PatConfig tiny_model_config(int viewCount = 1) {
    net::PatConfig cfg;
    cfg.depth = 8;
    cfg.viewCount = viewCount;
    cfg.repBlockCount = 1;
    cfg.postFusionBlocks = 1;
    cfg.asppDilations = {1, 2};
    return cfg;
}

} // namespace

TEST_CASE("psnr matches its closed forms") {
    Rng rng(1);
    const Tensor<float> a = random_image(9, 7, 3, rng);
    CHECK(std::isinf(psnr(a, a)));
    CHECK(psnr(a, a) > 0);

    // Uniform difference of 10 at peak 255: 20 log10(255/10) ~= 28.1308 dB.
    Tensor<float> u(5, 6, 1), v(5, 6, 1);
    for (auto& x : u.values) x = 100.0f;
    for (auto& x : v.values) x = 110.0f;
    CHECK(psnr(u, v, 255.0) == doctest::Approx(20.0 * std::log10(25.5)).epsilon(1e-9));
    CHECK(std::abs(psnr(u, v, 255.0) - 28.130803608679344) < 1e-6);

    // Uniform difference of 0.25 at peak 1: 20 log10(4) dB.
    Tensor<float> p(4, 4, 3), q(4, 4, 3);
    for (auto& x : p.values) x = 0.5f;
    for (auto& x : q.values) x = 0.75f;
    CHECK(psnr(p, q) == doctest::Approx(20.0 * std::log10(4.0)).epsilon(1e-9));
    CHECK(psnr(p, q) == psnr(q, p));

    CHECK_THROWS_AS(psnr(a, Tensor<float>(9, 7, 1)), std::invalid_argument);
    CHECK_THROWS_AS(psnr(a, a, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(psnr(a, a, -1.0), std::invalid_argument);
}

TEST_CASE("psnr matches a naive reference on random pairs") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 5 + int(rng.below(20));
        const int w = 5 + int(rng.below(20));
        const int d = rng.below(2) ? 3 : 1;
        const Tensor<float> a = random_image(h, w, d, rng, -0.2, 1.2);
        const Tensor<float> b = random_image(h, w, d, rng, -0.2, 1.2);
        const double peak = rng.below(2) ? 1.0 : 255.0;
        CHECK(std::abs(psnr(a, b, peak) - naive_psnr(a, b, peak)) < 1e-9);
    }
}

TEST_CASE("ssim matches its closed forms") {
    Rng rng(3);
    const Tensor<float> a = random_image(16, 14, 1, rng);
    CHECK(ssim(a, a) == 1.0);
    const Tensor<float> rgb = random_image(13, 17, 3, rng);
    CHECK(ssim(rgb, rgb) == 1.0);

    // A binary checkerboard against its negative anti-correlates.
    Tensor<float> board(16, 16, 1), negative(16, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            board.at(y, x, 0) = float((x + y) % 2);
            negative.at(y, x, 0) = 1.0f - board.at(y, x, 0);
        }
    CHECK(ssim(board, negative) < 0.0);

    // Constant images: variance terms vanish, luminance term remains:
    // ssim = (2 m1 m2 + c1) / (m1^2 + m2^2 + c1).
    Tensor<float> c1img(12, 12, 1), c2img(12, 12, 1);
    for (auto& x : c1img.values) x = 0.3f;
    for (auto& x : c2img.values) x = 0.5f;
    const double m1 = double(0.3f), m2 = double(0.5f);
    const double c1 = 0.01 * 0.01;
    const double want = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    CHECK(ssim(c1img, c2img) == doctest::Approx(want).epsilon(1e-9));

    // RGB pairs are scored on their luminance.
    const Tensor<float> rgb2 = random_image(13, 17, 3, rng);
    CHECK(ssim(rgb, rgb2) == ssim(nn::grayscale(rgb), nn::grayscale(rgb2)));

    CHECK_THROWS_AS(ssim(a, Tensor<float>(16, 13, 1)), std::invalid_argument);
    CHECK_THROWS_AS(ssim(Tensor<float>(10, 10, 1), Tensor<float>(10, 10, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ssim(Tensor<float>(16, 16, 2), Tensor<float>(16, 16, 2)),
                    std::invalid_argument);
}

TEST_CASE("ssim matches a naive reference on random pairs") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 11 + int(rng.below(10));
        const int w = 11 + int(rng.below(10));
        const int d = rng.below(2) ? 3 : 1;
        const Tensor<float> a = random_image(h, w, d, rng);
        // Mix of correlated and independent pairs.
        Tensor<float> b = a;
        if (rng.below(2)) {
            for (auto& v : b.values) v = std::clamp(v + float(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
        } else {
            b = random_image(h, w, d, rng);
        }
        CHECK(std::abs(ssim(a, b) - naive_ssim(a, b)) < 1e-6);
    }
}

TEST_CASE("report aggregates are arithmetic means and serialize to CSV/JSON") {
    EvalReport r;
    r.ids = {"0001", "0002"};
    r.alphaInput.psnrValues = {20.0, 30.0};
    r.alphaInput.ssimValues = {0.5, 0.7};
    r.betaInput.psnrValues = {22.5, std::numeric_limits<double>::infinity()};
    r.betaInput.ssimValues = {0.8, 1.0};
    r.fusion.psnrValues = {25.0, 26.0};
    r.fusion.ssimValues = {0.9, 0.92};
    r.protocol = "synthetic";
    r.scale = 2;

    CHECK(r.alphaInput.mean_psnr() == (20.0 + 30.0) / 2);
    CHECK(r.alphaInput.mean_ssim() == (0.5 + 0.7) / 2);
    CHECK(std::isinf(r.betaInput.mean_psnr())); // inf propagates into the mean
    CHECK(r.fusion.mean_psnr() == 25.5);

    const std::string csv = r.csv();
    CHECK(csv.find("id,alpha_psnr,alpha_ssim,beta_psnr,beta_ssim,fusion_psnr,fusion_ssim\n") ==
          0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 2 rows + mean
    CHECK(csv.find("\n0001,") != std::string::npos);
    CHECK(csv.find(",inf\n") == std::string::npos); // inf sits in the beta column
    CHECK(csv.find("inf") != std::string::npos);
    CHECK(csv.rfind("mean,") != std::string::npos);

    const auto j = nlohmann::json::parse(r.json_text());
    CHECK(j.at("protocol") == "synthetic");
    CHECK(j.at("scale") == 2);
    CHECK(j.at("ids").size() == 2);
    CHECK(j.at("columns").at("fusion").at("psnr").get<double>() == 25.5);
    CHECK(j.at("columns").at("beta_input").at("psnr").get<std::string>() == "inf");
    CHECK(j.at("columns").at("alpha_input").at("per_sample_psnr").size() == 2);
}

TEST_CASE("evaluate_frame follows the degrade-and-restore protocol") {
    Rng rng(5);
    net::PatModel<float> model(tiny_model_config(), 7);
    const geom::ReceptiveFieldMap rf = geom::horizontal_rf(32, 24, 6, 7);

    // Single-channel truth: the alpha column compares the repeated grayscale
    // frame against itself, so it reports the infinity/1.0 sentinel pair.
    const Tensor<float> truthGray = random_image(24, 32, 1, rng);
    const Tensor<float> betaRgb = random_image(24, 32, 3, rng);
    const FrameScores s1 = evaluate_frame(model, truthGray, betaRgb, rf, 1);
    CHECK(std::isinf(s1.alphaPsnr));
    CHECK(s1.alphaSsim == 1.0);
    CHECK(std::isfinite(s1.fusionPsnr));
    CHECK(s1.fusionSsim >= -1.0);
    CHECK(s1.fusionSsim <= 1.0);

    // A beta identical to the truth scores the sentinel at scale 1 ...
    const Tensor<float> truthRgb = random_image(24, 32, 3, rng);
    const FrameScores s2 = evaluate_frame(model, truthRgb, truthRgb, rf, 1);
    CHECK(std::isinf(s2.betaPsnr));
    CHECK(s2.betaSsim == 1.0);

    // ... and at scale 2 it is scored only after the bicubic down/up round
    // trip through half resolution.
    const FrameScores s3 = evaluate_frame(model, truthRgb, truthRgb, rf, 2);
    const Tensor<float> degraded =
        nn::clamp01(nn::bicubic_resample(nn::bicubic_resample(truthRgb, 16, 12), 32, 24));
    CHECK(std::isfinite(s3.betaPsnr));
    CHECK(s3.betaPsnr == doctest::Approx(psnr(degraded, truthRgb)).epsilon(1e-12));
    CHECK(s3.betaSsim == doctest::Approx(ssim(degraded, truthRgb)).epsilon(1e-12));
    // The alpha column ignores the beta degradation.
    CHECK(s3.alphaPsnr == s2.alphaPsnr);

    CHECK_THROWS_AS(evaluate_frame(model, truthRgb, truthRgb, rf, 3), std::invalid_argument);
    net::PatModel<float> twoView(tiny_model_config(2), 7);
    CHECK_THROWS_AS(evaluate_frame(twoView, truthRgb, truthRgb, rf, 1), std::invalid_argument);

    // RGB beta unpacks into three mono views for a three-view model.
    net::PatModel<float> threeView(tiny_model_config(3), 7);
    const FrameScores s4 = evaluate_frame(threeView, truthRgb, betaRgb, rf, 1);
    CHECK(std::isfinite(s4.fusionPsnr));
}

TEST_CASE("synthetic protocol walks validation scenes deterministically") {
    data::DatasetConfig cfg;
    cfg.sceneCount = 3;
    cfg.valSceneCount = 1;
    cfg.imageWidth = 96;
    cfg.imageHeight = 64;
    cfg.patchesPerScene = 1;
    cfg.cropWidth = 32;
    cfg.cropHeight = 32;
    cfg.downsample = 2;
    cfg.patchRfSlots = 9;
    cfg.frameRfSlots = 12;
    cfg.sceneComplexity = 4;
    cfg.focalPx = 100.0;
    cfg.seed = 11;
    const std::string dir = temp_dir("synth");
    data::build_dataset(cfg, dir);

    net::PatModel<float> model(tiny_model_config(), 7);
    EvalOptions opt;
    opt.protocol = "synthetic";
    opt.scale = 2;
    const EvalReport r1 = evaluate(model, dir, opt);
    REQUIRE(r1.ids.size() == 1); // scene 0002 is the single validation scene
    CHECK(r1.ids[0] == "0002");
    CHECK(r1.protocol == "synthetic");
    CHECK(r1.scale == 2);
    CHECK(std::isfinite(r1.fusion.mean_psnr()));
    CHECK(std::isfinite(r1.betaInput.mean_psnr()));
    CHECK(r1.alphaInput.psnrValues.size() == 1);
    CHECK(r1.alphaInput.mean_psnr() == r1.alphaInput.psnrValues[0]);

    const EvalReport r2 = evaluate(model, dir, opt);
    CHECK(r1.csv() == r2.csv());
    CHECK(r1.json_text() == r2.json_text());

    EvalOptions badProtocol = opt;
    badProtocol.protocol = "webcam";
    CHECK_THROWS_AS(evaluate(model, dir, badProtocol), std::invalid_argument);

    std::filesystem::remove(dir + "/scenes/0002/camA.png");
    CHECK_THROWS_AS(evaluate(model, dir, opt), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("stereo-dir protocol walks left/right pairs") {
    Rng rng(6);
    const std::string dir = temp_dir("stereo");
    std::filesystem::create_directories(dir + "/left");
    std::filesystem::create_directories(dir + "/right");
    for (const char* name : {"a", "b"}) {
        io::save_png(random_image(24, 32, 3, rng), dir + "/left/" + name + ".png");
        io::save_png(random_image(24, 32, 3, rng), dir + "/right/" + name + ".png");
    }

    net::PatModel<float> model(tiny_model_config(), 7);
    EvalOptions opt;
    opt.protocol = "stereo-dir";
    opt.scale = 2;
    opt.maxDisparity = 5;
    const EvalReport r = evaluate(model, dir, opt);
    REQUIRE(r.ids.size() == 2);
    CHECK(r.ids[0] == "a"); // lexicographic frame order
    CHECK(r.ids[1] == "b");
    CHECK(r.protocol == "stereo-dir");
    CHECK(std::isfinite(r.fusion.mean_psnr()));
    CHECK(r.fusion.mean_psnr() ==
          (r.fusion.psnrValues[0] + r.fusion.psnrValues[1]) / 2);

    // Missing counterpart and malformed trees are hard errors.
    io::save_png(random_image(24, 32, 3, rng), dir + "/left/c.png");
    CHECK_THROWS_AS(evaluate(model, dir, opt), std::runtime_error);
    std::filesystem::remove(dir + "/left/c.png");
    io::save_png(random_image(12, 16, 3, rng), dir + "/right/a.png"); // size mismatch
    CHECK_THROWS_AS(evaluate(model, dir, opt), std::runtime_error);
    CHECK_THROWS_AS(evaluate(model, temp_dir("empty"), opt), std::runtime_error);
    std::filesystem::remove_all(dir);
}
