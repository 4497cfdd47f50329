#pragma once

#include <cstdint>
#include <vector>

#include "gd/params.hpp"

namespace gd {

struct AdamHyper {
    Real learning_rate = 1e-3;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real epsilon = 1e-8;
    Real weight_decay = 0.0;  // decoupled, AdamW style
};

// Adam moments per trainable parameter, aligned with ModelParams order.
struct OptimizerState {
    std::int64_t step = 0;
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
    AdamHyper hyper;
};

OptimizerState make_optimizer(const ModelParams& params, AdamHyper hyper);

// One Adam update with bias correction and decoupled weight decay, applied in
// place to the trainable entries. Every trainable parameter must carry a
// gradient (missing gradients are rejected).
void adam_step(OptimizerState& state, ModelParams& params, Real learning_rate_override = -1.0);

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
// at total_steps. Requires warmup_steps <= total_steps and step in range.
Real lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, Real base_lr);

}  // namespace gd
