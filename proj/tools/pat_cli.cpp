/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/attn/bench.hpp"
#include "pat/core/config.hpp"
#include "pat/data/dataset.hpp"
#include "pat/eval/evaluate.hpp"
#include "pat/geom/epipolar.hpp"
#include "pat/io/image_io.hpp"
#include "pat/net/config_io.hpp"
#include "pat/net/trainer.hpp"
#include "pat/nn/grad_check.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using namespace pat;

constexpr const char* kVersion = "1.0.0";

/// Every subcommand records how to reproduce itself. Contents are
/// deterministic (no timestamps or absolute paths) so artifact trees from
/// identical runs stay byte-identical.
void write_run_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                        const std::string& configHash,
                        const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    fs::create_directories(dir);
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config_hash"] = configHash;
    j["versions"] = {{"pat", kVersion},
                     {"sample", "PATDS1"},
                     {"rf", "PATRF1"},
                     {"checkpoint", "PATCKPT1"},
                     {"resume", "PATRSM1"},
                     {"depth", "PATIMG1"}};
    for (const auto& [k, v] : extra) j[k] = v;
    std::ofstream f(dir / "run_manifest.json");
    if (!f) throw std::runtime_error("cannot write run manifest in " + dir.string());
    f << j.dump(2) << '\n';
}

KeyValueConfig load_config_or_empty(const std::string& path) {
    if (path.empty()) return KeyValueConfig::parse("");
    return KeyValueConfig::load(path);
}

void warn_unknown_keys(const KeyValueConfig& kv) {
    std::vector<std::string> known = net::known_net_keys();
    const auto dataKeys = data::known_dataset_keys();
    known.insert(known.end(), dataKeys.begin(), dataKeys.end());
    for (const std::string& k : kv.unknown_keys(known))
        std::cerr << "warning: unknown config key '" << k << "'\n";
}

int run_gen_data(const std::string& configPath, std::optional<std::uint64_t> seed,
                 const std::string& outDir, const std::string& preset) {
    KeyValueConfig kv = load_config_or_empty(configPath);
    warn_unknown_keys(kv);
    data::DatasetConfig cfg = data::dataset_config_from(kv);
    if (!preset.empty()) {
        cfg = preset == "paper" ? data::paper_dataset_config() : data::desk_dataset_config();
        if (preset != "paper" && preset != "desk")
            throw std::invalid_argument("unknown preset '" + preset + "'");
    }
    if (seed) cfg.seed = *seed;
    const data::BuiltDataset ds = data::build_dataset(cfg, outDir);
    write_run_manifest(outDir, "gen-data", cfg.seed, config_hash(data::dataset_config_text(cfg)));
    std::cout << "gen-data: " << cfg.sceneCount << " scenes, " << ds.train.size()
              << " train + " << ds.val.size() << " val samples -> " << outDir << "\n";
    return 0;
}

template <typename T>
int run_train_typed(const KeyValueConfig& kv, std::optional<std::uint64_t> seed,
                    const std::string& dataDir, const std::string& outDir, bool resume) {
    net::PatConfig mc = net::pat_config_from(kv);
    net::TrainConfig tc = net::train_config_from(kv);
    if (seed) tc.seed = *seed;
    tc.runDir = outDir;
    const data::BuiltDataset ds = data::load_dataset(dataDir);
    if (ds.train.empty()) throw std::runtime_error("train: dataset has no training samples");

    net::PatModel<T> model(mc, tc.seed);
    const net::TrainState st = net::train(model, ds.train, ds.val, tc, resume);
    if (st.aborted) {
        std::cerr << "train: aborted on non-finite loss at epoch " << st.epoch
                  << " (parameters kept at last good state)\n";
        return 1;
    }
    std::cout << "train: best validation PSNR " << st.bestValPsnr << " dB at epoch "
              << st.bestEpoch << "; model at " << (fs::path(outDir) / "model.ckpt").string()
              << "\n";
    return 0;
}

int run_train(const std::string& configPath, std::optional<std::uint64_t> seed,
              const std::string& dataDir, const std::string& outDir, bool resume,
              const std::string& precision) {
    KeyValueConfig kv = load_config_or_empty(configPath);
    warn_unknown_keys(kv);
    fs::create_directories(outDir);
    {
        std::ofstream f(fs::path(outDir) / "model.cfg");
        f << kv.text();
    }
    write_run_manifest(outDir, "train", seed.value_or(net::train_config_from(kv).seed),
                       config_hash(kv.text()), {{"precision", precision}});
    if (precision == "f64") return run_train_typed<double>(kv, seed, dataDir, outDir, resume);
    if (precision == "f32") return run_train_typed<float>(kv, seed, dataDir, outDir, resume);
    throw std::invalid_argument("train: precision must be f32 or f64");
}

int run_fuse(const std::string& configPath, const std::string& checkpoint,
             const std::string& alphaPath, const std::vector<std::string>& betaPaths,
             const std::vector<std::string>& rfPaths, const std::string& outFile, bool keepRgb) {
    KeyValueConfig kv = load_config_or_empty(configPath);
    net::PatConfig mc = net::pat_config_from(kv);
    net::PatModel<float> model(mc, 0);
    nn::checkpoint_load(model.store(), checkpoint);

    nn::Tensor<float> alpha = io::load_png(alphaPath);
    if (!keepRgb && alpha.depth == 3) alpha = nn::grayscale(alpha);

    std::vector<nn::Tensor<float>> betas;
    for (const std::string& p : betaPaths) betas.push_back(io::load_png(p));
    if (int(betas.size()) == 1 && mc.viewCount == 3 && betas[0].depth == 3)
        betas = net::unpack_channels(betas[0]);
    if (int(betas.size()) != mc.viewCount)
        throw std::runtime_error("fuse: model expects " + std::to_string(mc.viewCount) +
                                 " beta views, got " + std::to_string(betas.size()));

    std::vector<geom::ReceptiveFieldMap> rfs;
    for (const std::string& p : rfPaths) rfs.push_back(geom::rf_load(p));
    if (rfs.size() == 1 && mc.viewCount > 1)
        while (int(rfs.size()) < mc.viewCount) rfs.push_back(rfs[0]);
    if (int(rfs.size()) != mc.viewCount)
        throw std::runtime_error("fuse: need one receptive-field map per beta view");

    std::vector<const nn::Tensor<float>*> betaPtrs;
    std::vector<const geom::ReceptiveFieldMap*> rfPtrs;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        betaPtrs.push_back(&betas[i]);
        rfPtrs.push_back(&rfs[i]);
    }
    const nn::Tensor<float> fused = nn::clamp01(model.forward(alpha, betaPtrs, rfPtrs));
    io::save_png(fused, outFile);
    write_run_manifest(fs::path(outFile).parent_path().empty()
                           ? fs::path(".")
                           : fs::path(outFile).parent_path(),
                       "fuse", 0, config_hash(kv.text()));
    std::cout << "fuse: wrote " << outFile << "\n";
    return 0;
}

int run_eval(const std::string& configPath, const std::string& checkpoint,
             const std::string& dataDir, const std::string& outDir, const std::string& protocol,
             int scale, std::uint32_t maxDisparity) {
    KeyValueConfig kv = load_config_or_empty(configPath);
    net::PatConfig mc = net::pat_config_from(kv);
    net::PatModel<float> model(mc, 0);
    nn::checkpoint_load(model.store(), checkpoint);

    eval::EvalOptions opt;
    opt.protocol = protocol;
    opt.scale = scale;
    opt.maxDisparity = maxDisparity;
    const eval::EvalReport report = eval::evaluate(model, dataDir, opt);

    fs::create_directories(outDir);
    {
        std::ofstream f(fs::path(outDir) / "eval_report.csv");
        f << report.csv();
    }
    {
        std::ofstream f(fs::path(outDir) / "eval_report.json");
        f << report.json_text() << '\n';
    }
    write_run_manifest(outDir, "eval", 0, config_hash(kv.text()),
                       {{"protocol", protocol}, {"scale", std::to_string(scale)}});
    std::printf("eval (%s, x%d), %zu frames, PSNR dB / SSIM vs alpha ground truth:\n",
                protocol.c_str(), scale, report.ids.size());
    std::printf("  Alpha Input : %8.4f / %.4f\n", report.alphaInput.mean_psnr(),
                report.alphaInput.mean_ssim());
    std::printf("  Beta Input  : %8.4f / %.4f\n", report.betaInput.mean_psnr(),
                report.betaInput.mean_ssim());
    std::printf("  Fusion      : %8.4f / %.4f\n", report.fusion.mean_psnr(),
                report.fusion.mean_ssim());
    return 0;
}

int run_bench(const std::string& outDir, int m, int height, int width, int depth,
              std::vector<int> slotCounts, int runs, std::uint64_t seed) {
    if (slotCounts.empty()) slotCounts = {32, 64, 128};
    std::vector<attn::BenchRow> rows;
    for (int L : slotCounts)
        rows.push_back(attn::bench_attention(m, height, width, depth, L, L, runs, seed));
    const std::string csv = attn::bench_csv(rows);
    std::cout << csv;
    if (!outDir.empty()) {
        fs::create_directories(outDir);
        std::ofstream f(fs::path(outDir) / "bench.csv");
        f << csv;
        write_run_manifest(outDir, "bench", seed, config_hash(csv));
    }
    return 0;
}

int run_grad_check(std::optional<std::uint64_t> seedOpt, const std::string& outDir) {
    const std::uint64_t seed = seedOpt.value_or(1);
    net::PatConfig mc;
    mc.depth = 8;
    mc.repBlockCount = 1;
    mc.postFusionBlocks = 1;
    mc.viewCount = 1;
    mc.asppDilations = {1, 2};
    net::PatModel<double> model(mc, seed);

    Rng rng(mix64(seed) ^ 0x67726164ULL);
    const int H = 6, W = 8;
    nn::Tensor<double> alpha(H, W, 1), beta(H, W, 3), target(H, W, 3);
    for (auto& v : alpha.values) v = rng.uniform();
    for (auto& v : beta.values) v = rng.uniform();
    for (auto& v : target.values) v = rng.uniform();
    const geom::ReceptiveFieldMap rf =
        geom::horizontal_rf(std::uint32_t(W), std::uint32_t(H), 4, 5);

    auto loss = [&] {
        nn::Tensor<double> y = model.forward(alpha, {&beta}, {&rf});
        double s = 0;
        for (std::size_t i = 0; i < y.values.size(); ++i) {
            const double r = y.values[i] - target.values[i];
            s += r * r;
        }
        return s / double(y.values.size());
    };
    model.store().zero_grads();
    nn::Tensor<double> y = model.forward(alpha, {&beta}, {&rf});
    nn::Tensor<double> up(H, W, 3);
    for (std::size_t i = 0; i < y.values.size(); ++i)
        up.values[i] = 2.0 * (y.values[i] - target.values[i]) / double(y.values.size());
    model.backward(up);

    const auto items = nn::store_check_items(model.store());
    const nn::GradCheckReport report = nn::grad_check<double>(items, loss);
    std::printf("grad-check: max relative error %.3e at %s[%zu] (analytic %.6e, numeric %.6e)\n",
                report.maxRelError, report.worstName.c_str(), report.worstIndex, report.analytic,
                report.numeric);
    if (!outDir.empty()) {
        fs::create_directories(outDir);
        nlohmann::json j;
        j["max_rel_error"] = report.maxRelError;
        j["worst_param"] = report.worstName;
        j["worst_index"] = report.worstIndex;
        j["pass"] = report.ok();
        std::ofstream f(fs::path(outDir) / "grad_check.json");
        f << j.dump(2) << '\n';
        write_run_manifest(outDir, "grad-check", seed, "-");
    }
    std::printf("grad-check: %s (tolerance 1e-4)\n", report.ok() ? "PASS" : "FAIL");
    return report.ok() ? 0 : 1;
}

int run_rf_build(const std::string& mode, const std::string& camAPath,
                 const std::string& camBPath, std::uint32_t n, double nearDepth, double farDepth,
                 double planeDepth, std::uint32_t l, int width, int height,
                 std::uint32_t maxDisparity, const std::string& outFile) {
    geom::ReceptiveFieldMap map;
    if (mode == "horizontal") {
        if (width < 1 || height < 1)
            throw std::invalid_argument("rf-build: horizontal mode needs --width/--height");
        map = geom::horizontal_rf(std::uint32_t(width), std::uint32_t(height), maxDisparity, n);
    } else {
        if (camAPath.empty() || camBPath.empty())
            throw std::invalid_argument("rf-build: --cam-a and --cam-b are required");
        const geom::CameraModel camA = geom::load_camera_json(camAPath);
        const geom::CameraModel camB = geom::load_camera_json(camBPath);
        if (mode == "epipolar")
            map = geom::epipolar_rf(camA, camB, n, {nearDepth, farDepth});
        else if (mode == "homography")
            map = geom::homography_truncated_rf(camA, camB, planeDepth, l, n);
        else
            throw std::invalid_argument("rf-build: unknown mode '" + mode + "'");
    }
    map.check();
    geom::rf_save(map, outFile);
    std::cout << "rf-build: " << map.alphaWidth << "x" << map.alphaHeight << " rows, n=" << map.n
              << ", max valid/row " << map.max_valid_per_row() << " -> " << outFile << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-aware transformer for array-camera image fusion"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string configPath, outPath, dataDir, preset, precision = "f32";
    std::optional<std::uint64_t> seed;

    auto* gen = app.add_subcommand("gen-data", "Render scenes and build a fusion dataset");
    gen->add_option("--config", configPath, "key = value config file");
    gen->add_option("--seed", seed, "master seed override");
    gen->add_option("--out", outPath, "output dataset directory")->required();
    gen->add_option("--preset", preset, "desk or paper (overrides config)");

    auto* train = app.add_subcommand("train", "Train a fusion model on a dataset");
    train->add_option("--config", configPath, "key = value config file");
    train->add_option("--seed", seed, "training seed override");
    train->add_option("--data", dataDir, "dataset directory (gen-data output)")->required();
    train->add_option("--out", outPath, "run directory for checkpoints/logs")->required();
    bool resume = false;
    train->add_flag("--resume", resume, "continue from the run directory");
    train->add_option("--precision", precision, "f32 (default) or f64");

    std::string checkpoint, alphaPath, outFile;
    std::vector<std::string> betaPaths, rfPaths;
    bool keepRgb = false;
    auto* fuse = app.add_subcommand("fuse", "Fuse one alpha frame with beta frames");
    fuse->add_option("--config", configPath, "model config used at training time");
    fuse->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    fuse->add_option("--alpha", alphaPath, "alpha PNG (converted to grayscale)")->required();
    fuse->add_option("--beta", betaPaths, "beta PNG (repeat per view)")->required();
    fuse->add_option("--rf", rfPaths, "receptive-field map (repeat per view)")->required();
    fuse->add_option("--out", outFile, "output PNG path")->required();
    fuse->add_flag("--keep-rgb", keepRgb, "feed alpha as RGB instead of grayscale");

    std::string protocol = "synthetic";
    int scale = 1;
    std::uint32_t maxDisparity = 64;
    auto* evalCmd = app.add_subcommand("eval", "Score inputs and fused output against truth");
    evalCmd->add_option("--config", configPath, "model config used at training time");
    evalCmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    evalCmd->add_option("--data", dataDir, "dataset dir or stereo left/right dir")->required();
    evalCmd->add_option("--out", outPath, "report directory")->required();
    evalCmd->add_option("--protocol", protocol, "synthetic or stereo-dir")
        ->check(CLI::IsMember({"synthetic", "stereo-dir"}));
    evalCmd->add_option("--scale", scale, "beta downsample factor")
        ->check(CLI::IsMember({1, 2, 4}));
    evalCmd->add_option("--max-disparity", maxDisparity, "stereo-dir RF reach (pixels)");

    int benchM = 1, benchH = 16, benchW = 64, benchD = 16, benchRuns = 10;
    std::vector<int> benchL;
    auto* bench = app.add_subcommand("bench", "Attention-kernel timing CSV");
    bench->add_option("--m", benchM, "beta view count");
    bench->add_option("--height", benchH, "feature rows");
    bench->add_option("--width", benchW, "feature columns");
    bench->add_option("--depth", benchD, "feature depth D");
    bench->add_option("--slots", benchL, "receptive-field sizes L to time");
    bench->add_option("--runs", benchRuns, "timed repetitions per row");
    bench->add_option("--seed", seed, "fill seed");
    bench->add_option("--out", outPath, "directory for bench.csv");

    auto* gc = app.add_subcommand("grad-check", "Central-difference check of the tiny model");
    gc->add_option("--seed", seed, "parameter/input seed");
    gc->add_option("--out", outPath, "directory for grad_check.json");

    std::string mode = "epipolar", camAPath, camBPath;
    std::uint32_t rfN = 96, rfL = 80;
    double nearDepth = 0.5, farDepth = 40.0, planeDepth = 5.0;
    int rfW = 0, rfH = 0;
    auto* rfb = app.add_subcommand("rf-build", "Build and save a receptive-field map");
    rfb->add_option("--mode", mode, "epipolar, homography or horizontal");
    rfb->add_option("--cam-a", camAPath, "alpha camera JSON");
    rfb->add_option("--cam-b", camBPath, "beta camera JSON");
    rfb->add_option("--n", rfN, "slots per alpha pixel");
    rfb->add_option("--near", nearDepth, "near depth, meters");
    rfb->add_option("--far", farDepth, "far depth, meters");
    rfb->add_option("--plane-depth", planeDepth, "homography anchor depth");
    rfb->add_option("--l", rfL, "homography truncation half-window, pixels");
    rfb->add_option("--width", rfW, "horizontal mode: image width");
    rfb->add_option("--height", rfH, "horizontal mode: image height");
    rfb->add_option("--max-disparity", maxDisparity, "horizontal mode: window reach");
    rfb->add_option("--out", outFile, "output .rf path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_data(configPath, seed, outPath, preset);
        if (train->parsed())
            return run_train(configPath, seed, dataDir, outPath, resume, precision);
        if (fuse->parsed())
            return run_fuse(configPath, checkpoint, alphaPath, betaPaths, rfPaths, outFile,
                            keepRgb);
        if (evalCmd->parsed())
            return run_eval(configPath, checkpoint, dataDir, outPath, protocol, scale,
                            maxDisparity);
        if (bench->parsed())
            return run_bench(outPath, benchM, benchH, benchW, benchD, benchL, benchRuns,
                             seed.value_or(7));
        if (gc->parsed()) return run_grad_check(seed, outPath);
        if (rfb->parsed())
            return run_rf_build(mode, camAPath, camBPath, rfN, nearDepth, farDepth, planeDepth,
                                rfL, rfW, rfH, maxDisparity, outFile);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
