#include "gd/params.hpp"

#include <cmath>
#include <stdexcept>

#include "gd/rng.hpp"

namespace gd {

void ModelParams::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw std::invalid_argument("ModelParams: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ModelParams: no entry named " + name);
    return entries_[it->second].second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ModelParams: no entry named " + name);
    return entries_[it->second].second;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::trainable() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& e : entries_)
        if (e.second.requires_grad()) out.push_back(e);
    return out;
}

std::int64_t ModelParams::trainable_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
        if (e.second.requires_grad()) n += e.second.numel();
    return n;
}

void ModelParams::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

ModelParams init_params(const ParamSpec& spec, std::uint64_t seed) {
    ModelParams mp;
    mp.rng_seed = seed;
    Rng rng = derive_tagged(seed, "init");
    for (const auto& entry : spec) {
        const std::int64_t n = shape_numel(entry.shape);
        std::vector<Real> data(n);
        bool trainable = true;
        switch (entry.role) {
            case ParamRole::linear_weight: {
                if (entry.shape.size() != 2)
                    throw std::invalid_argument("init_params: linear_weight " + entry.name +
                                                " must be 2-D, got " + shape_str(entry.shape));
                const Real a = std::sqrt(6.0 / (entry.shape[0] + entry.shape[1]));
                for (auto& v : data) v = rng.uniform(-a, a);
                break;
            }
            case ParamRole::bias:
            case ParamRole::bn_beta:
                break;  // zeros
            case ParamRole::bn_gamma:
                std::fill(data.begin(), data.end(), 1.0);
                break;
            case ParamRole::bn_running_mean:
                trainable = false;
                break;
            case ParamRole::bn_running_var:
                trainable = false;
                std::fill(data.begin(), data.end(), 1.0);
                break;
        }
        mp.add(entry.name, Tensor::from_data(entry.shape, std::move(data), trainable));
    }
    return mp;
}

}  // namespace gd
