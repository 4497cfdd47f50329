#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gd/tensor.hpp"

namespace gd {

enum class ParamRole {
    linear_weight,    // Glorot-uniform, sqrt(6/(fan_in+fan_out))
    bias,             // zeros
    bn_gamma,         // ones
    bn_beta,          // zeros
    bn_running_mean,  // zeros, not trainable
    bn_running_var,   // ones, not trainable
};

struct ParamSpecEntry {
    std::string name;
    Shape shape;
    ParamRole role;
};

using ParamSpec = std::vector<ParamSpecEntry>;

// All model state, addressable by hierarchical name. Iteration order is the
// registration order and is deterministic.
class ModelParams {
public:
    std::uint64_t rng_seed = 0;

    void add(const std::string& name, Tensor t);
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

    // Entries with requires_grad set, in registration order.
    std::vector<std::pair<std::string, Tensor>> trainable() const;
    std::int64_t trainable_count() const;  // total scalar parameters

    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Deterministic initialization: one generator stream consumed in entry order,
// so a given (spec, seed) always produces bitwise-identical parameters.
ModelParams init_params(const ParamSpec& spec, std::uint64_t seed);

}  // namespace gd
