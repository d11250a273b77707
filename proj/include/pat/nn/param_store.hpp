/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pat::nn {

/// One learnable tensor with its gradient accumulator and Adam moments.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> m, v; // Adam moment buffers
    bool trainable = true;

    std::size_t count() const { return value.size(); }
};

/// Registry of named parameters. Layers borrow Param pointers from the
/// store that owns them; the optimizer and checkpoint I/O iterate the
/// registry in name order.
template <typename T>
class ParamStore {
public:
    Param<T>* create(const std::string& name, std::vector<int> shape) {
        if (byName_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->shape = std::move(shape);
        std::size_t n = 1;
        for (int d : p->shape) n *= std::size_t(d);
        p->value.assign(n, T(0));
        p->grad.assign(n, T(0));
        p->m.assign(n, T(0));
        p->v.assign(n, T(0));
        Param<T>* raw = p.get();
        byName_[name] = raw;
        params_.push_back(std::move(p));
        return raw;
    }

    Param<T>* find(const std::string& name) {
        auto it = byName_.find(name);
        return it == byName_.end() ? nullptr : it->second;
    }

    /// Name-sorted view (std::map iteration order).
    const std::map<std::string, Param<T>*>& named() const { return byName_; }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (auto& p : params_) n += p->count();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
    }

    std::int64_t adam_steps() const { return adamSteps_; }
    void set_adam_steps(std::int64_t s) { adamSteps_ = s; }

private:
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::map<std::string, Param<T>*> byName_;
    std::int64_t adamSteps_ = 0;

    template <typename U>
    friend void adam_step(ParamStore<U>&, double, double, double, double);
};

/// Standard Adam update with bias correction over every trainable
/// parameter. Throws on a non-finite gradient, naming the parameter.
template <typename T>
void adam_step(ParamStore<T>& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
    // Validate before mutating anything so a divergence leaves the store in
    // its last good state.
    for (auto& [name, p] : store.named()) {
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->count(); ++i)
            if (!std::isfinite(double(p->grad[i])))
                throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name +
                                         "' (training divergence)");
    }
    store.adamSteps_ += 1;
    const double t = double(store.adamSteps_);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, p] : store.named()) {
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->count(); ++i) {
            const double g = double(p->grad[i]);
            const double m = beta1 * double(p->m[i]) + (1.0 - beta1) * g;
            const double v = beta2 * double(p->v[i]) + (1.0 - beta2) * g * g;
            p->m[i] = T(m);
            p->v[i] = T(v);
            const double mHat = m / bc1;
            const double vHat = v / bc2;
            p->value[i] = T(double(p->value[i]) - lr * mHat / (std::sqrt(vHat) + eps));
        }
    }
}

/// Fan-in-scaled uniform init for conv kernels (biases stay zero).
template <typename T>
void he_uniform_init(Param<T>* p, std::size_t fanIn, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(fanIn));
    for (auto& v : p->value) v = T(rng.uniform(-bound, bound));
}

// --- checkpoint I/O -------------------------------------------------------
//
// Layout: magic "PATCKPT1", then name-sorted parameter blocks:
//   u32 nameLen | name bytes | u32 rank | u32 dims[rank] | f32 payload (LE)
// Blocks run to end of file.

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t((v >> 8) & 0xff));
    out.push_back(std::uint8_t((v >> 16) & 0xff));
    out.push_back(std::uint8_t((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

inline float get_f32(const std::uint8_t* p) {
    std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace detail

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
std::vector<std::uint8_t> checkpoint_serialize(const ParamStore<T>& store) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
    for (const auto& [name, p] : store.named()) {
        detail::put_u32(out, std::uint32_t(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put_u32(out, std::uint32_t(p->shape.size()));
        for (int d : p->shape) detail::put_u32(out, std::uint32_t(d));
        for (T v : p->value) detail::put_f32(out, float(v));
    }
    return out;
}

/// Loads parameter values into an existing store; every block must match a
/// registered parameter's name and shape.
template <typename T>
void checkpoint_deserialize(ParamStore<T>& store, const std::uint8_t* data, std::size_t size) {
    if (size < 8 || std::memcmp(data, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    std::size_t off = 8;
    auto need = [&](std::size_t k) {
        if (off + k > size) throw std::runtime_error("checkpoint: truncated stream");
    };
    while (off < size) {
        need(4);
        const std::uint32_t nameLen = detail::get_u32(data + off);
        off += 4;
        need(nameLen);
        std::string name(reinterpret_cast<const char*>(data + off), nameLen);
        off += nameLen;
        need(4);
        const std::uint32_t rank = detail::get_u32(data + off);
        off += 4;
        need(rank * 4);
        std::vector<int> shape(rank);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = int(detail::get_u32(data + off));
            off += 4;
            count *= std::size_t(shape[i]);
        }
        need(count * 4);
        Param<T>* p = store.find(name);
        if (!p) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
        if (p->shape != shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        for (std::size_t i = 0; i < count; ++i) {
            p->value[i] = T(detail::get_f32(data + off));
            off += 4;
        }
    }
}

template <typename T>
void checkpoint_save(const ParamStore<T>& store, const std::string& path) {
    auto bytes = checkpoint_serialize(store);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

template <typename T>
void checkpoint_load(ParamStore<T>& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    checkpoint_deserialize(store, bytes.data(), bytes.size());
}

} // namespace pat::nn
