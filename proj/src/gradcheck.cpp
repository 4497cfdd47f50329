#include "gd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gd/rng.hpp"

namespace gd {

Real grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, Real eps,
                int max_coords_per_tensor, std::uint64_t sample_seed) {
    if (params.empty()) throw std::invalid_argument("grad_check: no parameters");
    for (auto& p : params)
        if (!p.requires_grad())
            throw std::invalid_argument("grad_check: parameter without requires_grad");

    const Real base0 = f().item();
    const Real base1 = f().item();
    if (base0 != base1)
        throw std::invalid_argument("grad_check: f is not deterministic (got " +
                                    std::to_string(base0) + " then " + std::to_string(base1) + ")");

    for (auto& p : params) p.zero_grad();
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<Real>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        if (!p.has_grad())
            throw std::runtime_error("grad_check: parameter received no gradient");
        analytic.push_back(p.grad());
    }

    Rng rng(sample_seed);
    Real max_err = 0.0;
    for (size_t t = 0; t < params.size(); ++t) {
        auto& value = params[t].mutable_value();
        std::vector<std::int64_t> coords;
        const auto n = static_cast<std::int64_t>(value.size());
        if (max_coords_per_tensor <= 0 || n <= max_coords_per_tensor) {
            coords.resize(n);
            for (std::int64_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (int i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(static_cast<std::int64_t>(rng.next_below(n)));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        for (std::int64_t c : coords) {
            const Real saved = value[c];
            value[c] = saved + eps;
            const Real up = f().item();
            value[c] = saved - eps;
            const Real down = f().item();
            value[c] = saved;
            const Real numeric = (up - down) / (2.0 * eps);
            const Real a = analytic[t][c];
            const Real denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_err = std::max(max_err, std::fabs(a - numeric) / denom);
        }
    }
    return max_err;
}

Real grad_check(const std::function<Tensor()>& f, ModelParams& params, Real eps,
                int max_coords_per_tensor, std::uint64_t sample_seed) {
    std::vector<Tensor> ts;
    for (auto& [name, t] : params.trainable()) ts.push_back(t);
    return grad_check(f, std::move(ts), eps, max_coords_per_tensor, sample_seed);
}

}  // namespace gd
