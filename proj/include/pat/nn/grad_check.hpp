/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "pat/nn/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace pat::nn {

/// One flat array participating in a gradient check: the mutable storage the
/// loss closure reads from, and the analytic gradient to compare against.
template <typename T>
struct GradCheckItem {
    std::string name;
    T* values = nullptr;
    const T* grads = nullptr;
    std::size_t count = 0;
};

struct GradCheckReport {
    double maxRelError = 0.0;
    std::string worstName;
    std::size_t worstIndex = 0;
    double analytic = 0.0;
    double numeric = 0.0;

    bool ok(double tol = 1e-4) const { return maxRelError < tol; }
};

/// Central-difference comparison of analytic gradients against the scalar
/// loss closure. The closure must recompute the loss from the current
/// contents of every item's storage. Intended for 64-bit scalars; float
/// works but the usual tolerances will not hold.
template <typename T, typename LossFn>
GradCheckReport grad_check(const std::vector<GradCheckItem<T>>& items, LossFn&& loss,
                           T h = T(1e-5)) {
    GradCheckReport rep;
    for (const auto& it : items) {
        for (std::size_t i = 0; i < it.count; ++i) {
            const T orig = it.values[i];
            const double ana = double(it.grads[i]);
            auto numericAt = [&](T step) {
                it.values[i] = orig + step;
                const double up = double(loss());
                it.values[i] = orig - step;
                const double dn = double(loss());
                it.values[i] = orig;
                return (up - dn) / (2.0 * double(step));
            };
            auto relTo = [&](double num) {
                const double denom = std::max({std::abs(ana), std::abs(num), 1e-3});
                return std::abs(ana - num) / denom;
            };
            double num = numericAt(h);
            double rel = relTo(num);
            // A step of +/-h can straddle a leaky-ReLU kink, in which case the
            // secant mixes the two slopes and misreports a correct gradient by
            // up to the slope gap. Shrinking the step moves the kink outside
            // the sampled interval, so the estimate converges to the one-sided
            // derivative; a genuine backward bug disagrees at every step size.
            for (double shrink : {8.0, 64.0}) {
                if (rel <= 5e-5) break;
                const double alt = numericAt(T(double(h) / shrink));
                if (relTo(alt) < rel) {
                    num = alt;
                    rel = relTo(alt);
                }
            }
            if (rel > rep.maxRelError) {
                rep.maxRelError = rel;
                rep.worstName = it.name;
                rep.worstIndex = i;
                rep.analytic = ana;
                rep.numeric = num;
            }
        }
    }
    return rep;
}

/// Wraps every trainable parameter of a store as a check item. Callers add
/// further items for input tensors they also want verified.
template <typename T>
std::vector<GradCheckItem<T>> store_check_items(ParamStore<T>& store) {
    std::vector<GradCheckItem<T>> items;
    for (auto& [name, p] : store.named()) {
        if (!p->trainable) continue;
        items.push_back({name, p->value.data(), p->grad.data(), p->count()});
    }
    return items;
}

} // namespace pat::nn
