#pragma once

#include <cmath>
#include <cstdint>

#include "attnrec/tensor.hpp"

namespace attnrec {

// Piecewise-constant decay: lr = base * factor^floor(step / every).
struct LrSchedule {
    float base_lr = 0.005f;
    float decay_factor = 0.1f;
    int decay_every = 10000;

    float at(std::int64_t step) const {
        if (decay_every <= 0) throw ConfigError("LrSchedule: decay_every must be >= 1");
        std::int64_t k = step / decay_every;
        return base_lr * static_cast<float>(std::pow(static_cast<double>(decay_factor),
                                                     static_cast<double>(k)));
    }
};

struct RmsPropState {
    ParamMap mean_square;  // lazily allocated per parameter, same shapes
    float decay_rho = 0.9f;
    float epsilon = 1e-8f;
    LrSchedule schedule;
    std::int64_t step_count = 0;

    float current_lr() const { return schedule.at(step_count); }
};

// Plain (uncentered) RMSProp on one parameter tensor. The step counter is
// advanced once per batch by rmsprop_apply, not here.
inline void rmsprop_update_tensor(Tensor& param, const Tensor& grad, Tensor& mean_square,
                                  float rho, float eps, float lr, const std::string& name) {
    require_same_shape(param, grad, "rmsprop_step");
    if (!all_finite(grad)) throw TrainingError("rmsprop_step: non-finite gradient for parameter '" + name + "'");
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        float g = grad.data[i];
        float s = rho * mean_square.data[i] + (1.0f - rho) * g * g;
        mean_square.data[i] = s;
        param.data[i] -= lr * g / (std::sqrt(s) + eps);
    }
}

// One optimizer step over the whole parameter map (one global batch).
inline void rmsprop_apply(ParamMap& params, const ParamMap& grads, RmsPropState& state) {
    float lr = state.current_lr();
    for (auto& [name, param] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        auto [mit, inserted] = state.mean_square.try_emplace(name, Tensor::zeros(param.shape));
        rmsprop_update_tensor(param, git->second, mit->second, state.decay_rho, state.epsilon, lr,
                              name);
    }
    ++state.step_count;
}

}  // namespace attnrec
