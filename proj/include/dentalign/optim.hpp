#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "dentalign/checkpoint.hpp"
#include "dentalign/errors.hpp"
#include "dentalign/tensor.hpp"

namespace dentalign {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

// Decoupled weight decay with bias-corrected moments.
struct OptimState {
    AdamWConfig cfg;
    std::map<std::string, ad::Tensor> m, v;  // moments mirror parameter shapes
    std::int64_t step = 0;
};

using NamedGrads = std::map<std::string, ad::Tensor>;

inline void adamw_step(NamedTensors& params, const NamedGrads& grads, OptimState& state, double lr) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        if (!p.requires_grad) continue;
        auto git = grads.find(name);
        if (git == grads.end()) continue;  // parameter unused this step
        const ad::Tensor& g = git->second;
        if (g.shape != p.shape) {
            throw ShapeError("gradient shape " + ad::shape_str(g.shape) + " does not match parameter " +
                             name + " " + ad::shape_str(p.shape));
        }
        for (double x : g.data) {
            if (!std::isfinite(x)) throw NumericalError("non-finite gradient for parameter " + name);
        }
        auto& m = state.m.try_emplace(name, ad::Tensor::zeros(p.shape)).first->second;
        auto& v = state.v.try_emplace(name, ad::Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = state.cfg.beta1 * m.data[i] + (1.0 - state.cfg.beta1) * g.data[i];
            v.data[i] = state.cfg.beta2 * v.data[i] + (1.0 - state.cfg.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * (mhat / (std::sqrt(vhat) + state.cfg.eps) + state.cfg.weight_decay * p.data[i]);
        }
    }
}

struct ScheduleConfig {
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 1;
    double base_lr = 1e-4;
    double min_lr = 1e-6;

    void validate() const {
        if (warmup_steps < 0 || warmup_steps >= total_steps) {
            throw ConfigError("schedule requires 0 <= warmup_steps < total_steps");
        }
        if (min_lr > base_lr) throw ConfigError("schedule requires min_lr <= base_lr");
    }
};

// Linear 0 -> base_lr over the warmup, then cosine decay to min_lr. Steps
// past the end clamp to min_lr.
inline double cosine_warmup_lr(std::int64_t step, const ScheduleConfig& cfg) {
    cfg.validate();
    if (step < 0) throw ConfigError("negative schedule step");
    if (step < cfg.warmup_steps) {
        return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    if (step >= cfg.total_steps) return cfg.min_lr;
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.min_lr + (cfg.base_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace dentalign
