/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/data/sample.hpp"
#include "pat/eval/metrics.hpp"
#include "pat/net/model.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>

namespace pat::net {

using data::FusionSample;

/// The four degradations of the 2-view protocol, drawn uniformly per sample.
enum class AugmentKind : int {
    AlphaBlur = 0,    // box blur on the alpha input
    BetaBlur = 1,     // box blur on the beta input
    BetaDownUp = 2,   // 2x bicubic down, restored to original dims
    BetaBlurDownUp = 3,
};

struct AugmentedSample {
    nn::Tensor<float> alphaInput; // grayscale, 1 channel
    nn::Tensor<float> betaInput;  // RGB
    AugmentKind kind = AugmentKind::AlphaBlur;
};

inline int draw_blur_size(Rng& rng) { return rng.below(2) ? 5 : 3; }

/// Alpha input is always the grayscale of the ground-truth patch; one of the
/// four degradations is applied on top when `degrade` is set.
inline AugmentedSample augment(const FusionSample& s, Rng& rng, bool degrade = true) {
    AugmentedSample out;
    out.alphaInput = nn::grayscale(s.alpha);
    out.betaInput = s.beta;
    if (!degrade) return out;
    out.kind = AugmentKind(int(rng.below(4)));
    const auto downUp = [](const nn::Tensor<float>& img) {
        nn::Tensor<float> small =
            nn::bicubic_resample(img, std::max(1, img.width / 2), std::max(1, img.height / 2));
        return nn::bicubic_resample(small, img.width, img.height);
    };
    switch (out.kind) {
    case AugmentKind::AlphaBlur:
        out.alphaInput = nn::box_blur(out.alphaInput, draw_blur_size(rng));
        break;
    case AugmentKind::BetaBlur:
        out.betaInput = nn::box_blur(out.betaInput, draw_blur_size(rng));
        break;
    case AugmentKind::BetaDownUp:
        out.betaInput = downUp(out.betaInput);
        break;
    case AugmentKind::BetaBlurDownUp:
        out.betaInput = downUp(nn::box_blur(out.betaInput, draw_blur_size(rng)));
        break;
    }
    return out;
}

struct TrainConfig {
    int epochs = 12;
    int batchSize = 8;
    double lr = 0.0002;
    int lrHalfLifeEpochs = 30;
    std::uint64_t seed = 1;
    bool degrade = true;    // apply the 4-way augmentation
    bool fourView = false;  // unpack beta RGB into three mono views (m=3)
    int prefetchDepth = 4;  // bounded-queue capacity for augmented samples
    std::string runDir;     // checkpoints + CSV log; empty = in-memory only
};

struct TrainState {
    int epoch = 0; // epochs completed
    std::uint64_t adamSteps = 0;
    double lr = 0.0;
    double bestValPsnr = -std::numeric_limits<double>::infinity();
    int bestEpoch = -1;
    std::uint64_t seed = 0;
    bool aborted = false;
    std::vector<double> lossTrajectory; // per-step mean batch loss
    std::vector<double> valPsnrHistory; // per-epoch validation PSNR
};

/// 0.0002 halving every 30 epochs (integer floor).
inline double learning_rate(double lr0, int halfLifeEpochs, int epoch) {
    return lr0 * std::pow(0.5, double(epoch / halfLifeEpochs));
}

void train_state_save(const TrainState& st, const std::string& path);
TrainState train_state_load(const std::string& path);

namespace detail {

/// Single-producer single-consumer bounded queue for sample prefetch.
template <typename Item>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

    void push(Item item) {
        std::unique_lock<std::mutex> lock(mu_);
        notFull_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return;
        items_.push_back(std::move(item));
        notEmpty_.notify_one();
    }

    std::optional<Item> pop() {
        std::unique_lock<std::mutex> lock(mu_);
        notEmpty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        Item item = std::move(items_.front());
        items_.pop_front();
        notFull_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
        notEmpty_.notify_all();
        notFull_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<Item> items_;
    bool closed_ = false;
    std::mutex mu_;
    std::condition_variable notEmpty_, notFull_;
};

inline std::vector<std::size_t> shuffled_indices(std::size_t count, Rng& rng) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    for (std::size_t i = count; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

// Full-precision resume file: params + Adam moments, native scalar width.
// (The PATCKPT1 checkpoint stores f32 and is the interchange format; this
// sidecar preserves bit-exact state for resumption.)
inline constexpr char kResumeMagic[8] = {'P', 'A', 'T', 'R', 'S', 'M', '1', '\0'};

template <typename T>
void resume_save(const nn::ParamStore<T>& store, const std::string& path) {
    std::vector<std::uint8_t> out(kResumeMagic, kResumeMagic + 8);
    nn::detail::put_u32(out, std::uint32_t(sizeof(T)));
    const std::uint64_t steps = std::uint64_t(store.adam_steps());
    nn::detail::put_u32(out, std::uint32_t(steps));
    nn::detail::put_u32(out, std::uint32_t(steps >> 32));
    auto putScalar = [&](T v) {
        std::uint8_t bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        out.insert(out.end(), bytes, bytes + sizeof(T));
    };
    for (const auto& [name, p] : store.named()) {
        nn::detail::put_u32(out, std::uint32_t(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        nn::detail::put_u32(out, std::uint32_t(p->count()));
        for (T v : p->value) putScalar(v);
        for (T v : p->m) putScalar(v);
        for (T v : p->v) putScalar(v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("resume: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw std::runtime_error("resume: write failed: " + path);
}

template <typename T>
void resume_load(nn::ParamStore<T>& store, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("resume: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - off < n) throw std::runtime_error("resume: truncated file");
    };
    need(8);
    if (std::memcmp(bytes.data(), kResumeMagic, 8) != 0)
        throw std::runtime_error("resume: bad magic bytes");
    off = 8;
    need(12);
    const std::uint32_t scalarBytes = nn::detail::get_u32(bytes.data() + off);
    if (scalarBytes != sizeof(T))
        throw std::runtime_error("resume: scalar width mismatch (file " +
                                 std::to_string(scalarBytes) + ", expected " +
                                 std::to_string(sizeof(T)) + ")");
    const std::uint64_t lo = nn::detail::get_u32(bytes.data() + off + 4);
    const std::uint64_t hi = nn::detail::get_u32(bytes.data() + off + 8);
    store.set_adam_steps(std::int64_t(lo | (hi << 32)));
    off += 12;
    while (off < bytes.size()) {
        need(4);
        const std::uint32_t nameLen = nn::detail::get_u32(bytes.data() + off);
        off += 4;
        need(nameLen + 4);
        const std::string name(reinterpret_cast<const char*>(bytes.data() + off), nameLen);
        off += nameLen;
        const std::uint32_t count = nn::detail::get_u32(bytes.data() + off);
        off += 4;
        nn::Param<T>* p = store.find(name);
        if (!p) throw std::runtime_error("resume: unknown parameter '" + name + "'");
        if (p->count() != count)
            throw std::runtime_error("resume: size mismatch for parameter '" + name + "'");
        need(std::size_t(count) * 3 * sizeof(T));
        auto read = [&](std::vector<T>& dst) {
            std::memcpy(dst.data(), bytes.data() + off, count * sizeof(T));
            off += count * sizeof(T);
        };
        read(p->value);
        read(p->m);
        read(p->v);
    }
}

} // namespace detail

/// Inputs for one optimizer contribution, already split into views.
template <typename T>
struct PreparedSample {
    Tensor<T> alphaInput;
    std::vector<Tensor<T>> betaInputs;
    Tensor<T> truth;
    const FusionSample* src = nullptr;
};

/// Augments (optionally) and converts a dataset sample into model inputs.
template <typename T>
PreparedSample<T> prepare_sample(const FusionSample& s, Rng& rng, bool degrade, bool fourView) {
    AugmentedSample aug = augment(s, rng, degrade);
    PreparedSample<T> out;
    out.src = &s;
    out.alphaInput = nn::tensor_cast<T>(aug.alphaInput);
    out.truth = nn::tensor_cast<T>(s.alpha);
    if (fourView) {
        for (auto& ch : unpack_channels(aug.betaInput))
            out.betaInputs.push_back(nn::tensor_cast<T>(ch));
    } else {
        out.betaInputs.push_back(nn::tensor_cast<T>(aug.betaInput));
    }
    return out;
}

/// Receptive-field pointers for a prepared sample: per-view maps when the
/// sample carries them, otherwise the single map shared across views.
inline std::vector<const ReceptiveFieldMap*> sample_rfs(const FusionSample& s, std::size_t views) {
    if (s.rfs.empty()) throw std::invalid_argument("sample has no receptive-field map");
    std::vector<const ReceptiveFieldMap*> out(views);
    for (std::size_t i = 0; i < views; ++i)
        out[i] = s.rfs.size() == views ? &s.rfs[i] : &s.rfs[0];
    return out;
}

/// Mean validation PSNR (clamped output vs ground truth, peak 1, RGB).
template <typename T>
double validate(PatModel<T>& model, const std::vector<FusionSample>& valSet, bool fourView) {
    if (valSet.empty()) throw std::invalid_argument("validate: empty validation set");
    Rng unused(0);
    double total = 0;
    for (const FusionSample& s : valSet) {
        PreparedSample<T> ps = prepare_sample<T>(s, unused, false, fourView);
        std::vector<const Tensor<T>*> betas;
        for (auto& b : ps.betaInputs) betas.push_back(&b);
        Tensor<T> y = model.forward(ps.alphaInput, betas, sample_rfs(s, betas.size()));
        total += eval::psnr(nn::clamp01(y), ps.truth, 1.0);
    }
    return total / double(valSet.size());
}

/// The training loop: MSE on normalized patches, Adam, halving LR schedule,
/// per-epoch validation, best-PSNR model selection. Deterministic given the
/// seed: shuffling and augmentation draw from per-(seed, epoch, index)
/// streams, so the bounded-queue prefetch thread cannot affect results.
/// On a non-finite loss the run aborts and the model keeps the last good
/// parameters. When `resume` is set, continues a run from cfg.runDir.
template <typename T>
TrainState train(PatModel<T>& model, const std::vector<FusionSample>& trainSet,
                 const std::vector<FusionSample>& valSet, const TrainConfig& cfg,
                 bool resume = false) {
    if (trainSet.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.epochs < 1 || cfg.batchSize < 1) throw std::invalid_argument("train: bad config");
    namespace fs = std::filesystem;

    TrainState st;
    st.seed = cfg.seed;
    std::ofstream log;
    if (!cfg.runDir.empty()) {
        fs::create_directories(cfg.runDir);
        if (resume && fs::exists(cfg.runDir + "/train_state.json")) {
            st = train_state_load(cfg.runDir + "/train_state.json");
            detail::resume_load(model.store(), cfg.runDir + "/resume.bin");
            st.lossTrajectory.clear();
        }
        log.open(cfg.runDir + "/train_log.csv", resume ? std::ios::app : std::ios::trunc);
        if (!resume) log << "epoch,step,loss,lr,val_psnr\n";
    }

    // Best-model snapshot lives in memory so selection works without runDir.
    std::vector<std::vector<T>> bestParams;
    auto snapshot = [&] {
        bestParams.clear();
        for (const auto& [name, p] : model.store().named()) bestParams.push_back(p->value);
    };
    auto restore_best = [&] {
        if (bestParams.empty()) return;
        std::size_t i = 0;
        for (const auto& [name, p] : model.store().named()) p->value = bestParams[i++];
    };

    const std::size_t sampleCount = trainSet.size();
    const bool fourView = cfg.fourView;
    std::uint64_t globalStep = st.adamSteps;

    for (int epoch = st.epoch; epoch < cfg.epochs && !st.aborted; ++epoch) {
        const double lr = learning_rate(cfg.lr, cfg.lrHalfLifeEpochs, epoch);
        st.lr = lr;
        Rng orderRng(hash_combine(cfg.seed, hash_combine(0x6f726472, std::uint64_t(epoch))));
        const std::vector<std::size_t> order = detail::shuffled_indices(sampleCount, orderRng);

        // Prefetch thread: augments samples in epoch order; determinism comes
        // from per-sample seeds, not thread scheduling.
        detail::BoundedQueue<PreparedSample<T>> queue(std::size_t(cfg.prefetchDepth));
        std::thread producer([&] {
            for (std::size_t pos = 0; pos < order.size(); ++pos) {
                const std::size_t idx = order[pos];
                Rng rng(hash_combine(cfg.seed,
                                     hash_combine(std::uint64_t(epoch) * 0x9e37 + 17,
                                                  std::uint64_t(idx))));
                queue.push(prepare_sample<T>(trainSet[idx], rng, cfg.degrade, fourView));
            }
            queue.close();
        });

        auto retire_producer = [&] {
            queue.close();
            producer.join();
        };
        try {
            for (std::size_t start = 0; start < sampleCount && !st.aborted;
                 start += std::size_t(cfg.batchSize)) {
                const std::size_t batchN =
                    std::min(std::size_t(cfg.batchSize), sampleCount - start);
                model.store().zero_grads();
                double batchLoss = 0;
                for (std::size_t b = 0; b < batchN; ++b) {
                    auto item = queue.pop();
                    if (!item) throw std::runtime_error("train: prefetch queue closed early");
                    PreparedSample<T>& ps = *item;
                    std::vector<const Tensor<T>*> betas;
                    for (auto& bi : ps.betaInputs) betas.push_back(&bi);
                    Tensor<T> y = model.forward(ps.alphaInput, betas,
                                                sample_rfs(*ps.src, betas.size()));
                    const double invCount = 1.0 / double(y.size());
                    Tensor<T> up(y.height, y.width, y.depth);
                    double loss = 0;
                    for (std::size_t i = 0; i < y.size(); ++i) {
                        const double r = double(y.values[i]) - double(ps.truth.values[i]);
                        loss += r * r;
                        up.values[i] = T(2.0 * r * invCount / double(batchN));
                    }
                    batchLoss += loss * invCount / double(batchN);
                    model.backward(up);
                }
                if (!std::isfinite(batchLoss)) {
                    st.aborted = true; // params untouched since the last good step
                    break;
                }
                try {
                    nn::adam_step(model.store(), lr);
                } catch (const std::runtime_error&) {
                    st.aborted = true; // adam_step validates before mutating
                    break;
                }
                ++globalStep;
                st.lossTrajectory.push_back(batchLoss);
                if (log.is_open())
                    log << epoch << ',' << globalStep << ',' << std::setprecision(17)
                        << batchLoss << ',' << lr << ",\n";
            }
        } catch (...) {
            // A joinable thread's destructor would terminate the process:
            // unblock and retire the producer before the exception escapes.
            retire_producer();
            throw;
        }
        retire_producer();
        if (st.aborted) break;

        st.epoch = epoch + 1;
        st.adamSteps = globalStep;
        if (!valSet.empty()) {
            const double valPsnr = validate(model, valSet, fourView);
            st.valPsnrHistory.push_back(valPsnr);
            if (valPsnr > st.bestValPsnr) {
                st.bestValPsnr = valPsnr;
                st.bestEpoch = epoch;
                snapshot();
                if (!cfg.runDir.empty())
                    nn::checkpoint_save(model.store(), cfg.runDir + "/best.ckpt");
            }
            if (log.is_open())
                log << epoch << ',' << globalStep << ",," << lr << ',' << valPsnr << "\n";
        }
        if (!cfg.runDir.empty()) {
            nn::checkpoint_save(model.store(), cfg.runDir + "/last.ckpt");
            detail::resume_save(model.store(), cfg.runDir + "/resume.bin");
            train_state_save(st, cfg.runDir + "/train_state.json");
        }
    }

    if (!cfg.runDir.empty()) {
        nn::checkpoint_save(model.store(), cfg.runDir + "/last.ckpt");
        train_state_save(st, cfg.runDir + "/train_state.json");
    }
    // Select the best-validation model (falls back to the final parameters
    // when no validation ran).
    if (!st.aborted) restore_best();
    if (!cfg.runDir.empty() && !st.aborted && !bestParams.empty())
        nn::checkpoint_save(model.store(), cfg.runDir + "/model.ckpt");
    return st;
}

} // namespace pat::net
