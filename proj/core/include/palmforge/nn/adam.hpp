#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "palmforge/errors.hpp"
#include "palmforge/nn/denoiser.hpp"

namespace palmforge::nn {

// lr_min + 0.5 (base - lr_min)(1 + cos(pi step/total)); past total it stays at lr_min
inline double cosine_lr(std::int64_t step, double base_lr, std::int64_t total_steps,
                        double lr_min) {
    if (step < 0) throw InvalidArgument("cosine_lr: step must be >= 0");
    if (total_steps <= 0) throw InvalidArgument("cosine_lr: total_steps must be positive");
    if (step >= total_steps) return lr_min;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (base_lr - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;  // one entry per parameter tensor, visit order
    std::int64_t step = 0;
    double base_lr = 1e-3;
    std::int64_t total_steps = 1;
    double lr_min = 0.0;
};

template <class T>
AdamState<T> make_adam_state_sized(const std::vector<std::size_t>& sizes, double base_lr,
                                   std::int64_t total_steps, double lr_min = 0.0) {
    AdamState<T> s;
    s.base_lr = base_lr;
    s.total_steps = total_steps;
    s.lr_min = lr_min;
    for (std::size_t n : sizes) {
        s.m.emplace_back(n, T(0));
        s.v.emplace_back(n, T(0));
    }
    return s;
}

template <class T>
AdamState<T> make_adam_state(const DenoiserParams<T>& p, double base_lr, std::int64_t total_steps,
                             double lr_min = 0.0) {
    std::vector<std::size_t> sizes;
    p.visit([&sizes](const char*, const std::vector<T>& t) { sizes.push_back(t.size()); });
    return make_adam_state_sized<T>(sizes, base_lr, total_steps, lr_min);
}

// In-place Adam with bias correction; lr from the cosine schedule at the
// pre-increment step counter. Returns the lr that was applied.
template <class T>
double adam_step_list(const std::vector<std::vector<T>*>& params,
                      const std::vector<std::vector<T>*>& grads, AdamState<T>& st) {
    constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
    const double lr = cosine_lr(st.step, st.base_lr, st.total_steps, st.lr_min);
    const std::int64_t t = st.step + 1;
    const double bc1 = 1.0 - std::pow(kB1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(kB2, static_cast<double>(t));

    if (params.size() != grads.size() || params.size() != st.m.size())
        throw InvalidArgument("adam_step: tensor list mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = *params[k];
        const auto& g = *grads[k];
        auto& m = st.m[k];
        auto& v = st.v[k];
        if (w.size() != g.size() || w.size() != m.size())
            throw InvalidArgument("adam_step: tensor shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = kB1 * static_cast<double>(m[i]) + (1.0 - kB1) * gi;
            const double vi = kB2 * static_cast<double>(v[i]) + (1.0 - kB2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + kEps));
        }
    }
    st.step = t;
    return lr;
}

template <class T>
double adam_step(DenoiserParams<T>& p, const DenoiserParams<T>& grads, AdamState<T>& st) {
    return adam_step_list(tensor_list(p), tensor_list(const_cast<DenoiserParams<T>&>(grads)), st);
}

}  // namespace palmforge::nn
