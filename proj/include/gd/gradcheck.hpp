#pragma once

#include <functional>
#include <vector>

#include "gd/params.hpp"

namespace gd {

// Compares analytic gradients against central finite differences.
//
// `f` must rebuild the forward graph from the current parameter values and
// return a scalar loss; it is called repeatedly with perturbed parameters.
// Returns the maximum over checked coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// A non-deterministic f (e.g. dropout in training mode with a live rng) is
// rejected: the function is evaluated twice up front and must agree bitwise.
//
// max_coords_per_tensor == 0 checks every coordinate; otherwise a seeded
// subsample of that size per tensor.
Real grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, Real eps = 1e-5,
                int max_coords_per_tensor = 0, std::uint64_t sample_seed = 0);

Real grad_check(const std::function<Tensor()>& f, ModelParams& params, Real eps = 1e-5,
                int max_coords_per_tensor = 0, std::uint64_t sample_seed = 0);

}  // namespace gd
