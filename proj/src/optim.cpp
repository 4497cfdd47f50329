#include "gd/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gd {

OptimizerState make_optimizer(const ModelParams& params, AdamHyper hyper) {
    OptimizerState st;
    st.hyper = hyper;
    for (const auto& [name, t] : params.trainable()) {
        st.m.emplace_back(t.numel(), 0.0);
        st.v.emplace_back(t.numel(), 0.0);
    }
    return st;
}

void adam_step(OptimizerState& state, ModelParams& params, Real learning_rate_override) {
    auto trainable = params.trainable();
    if (trainable.size() != state.m.size())
        throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    const Real lr =
        learning_rate_override >= 0.0 ? learning_rate_override : state.hyper.learning_rate;
    state.step += 1;
    const Real bc1 = 1.0 - std::pow(state.hyper.beta1, static_cast<Real>(state.step));
    const Real bc2 = 1.0 - std::pow(state.hyper.beta2, static_cast<Real>(state.step));

    for (size_t t = 0; t < trainable.size(); ++t) {
        auto& [name, tensor] = trainable[t];
        if (!tensor.has_grad())
            throw std::invalid_argument("adam_step: parameter " + name + " has no gradient");
        const auto& g = tensor.grad();
        auto& theta = tensor.mutable_value();
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.hyper.beta1 * m[i] + (1.0 - state.hyper.beta1) * g[i];
            v[i] = state.hyper.beta2 * v[i] + (1.0 - state.hyper.beta2) * g[i] * g[i];
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            const Real decay = state.hyper.weight_decay * theta[i];
            theta[i] -= lr * (mhat / (std::sqrt(vhat) + state.hyper.epsilon) + decay);
        }
    }
}

Real lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, Real base_lr) {
    if (warmup_steps > total_steps)
        throw std::invalid_argument("lr_at: warmup_steps " + std::to_string(warmup_steps) +
                                    " exceeds total_steps " + std::to_string(total_steps));
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(total_steps) + "]");
    if (step < warmup_steps)
        return base_lr * static_cast<Real>(step) / static_cast<Real>(warmup_steps);
    if (total_steps == warmup_steps) return step < total_steps ? base_lr : 0.0;
    const Real t = static_cast<Real>(step - warmup_steps) /
                   static_cast<Real>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi_v<Real> * t));
}

}  // namespace gd
