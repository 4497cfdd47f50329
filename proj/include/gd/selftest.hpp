#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gd/graph.hpp"
#include "gd/rng.hpp"

namespace gd {

// Built-in verification suite behind `gd selftest`: gradient checks against
// central differences, the brute-force walk oracle, the softmax reduction and
// ablation equivalences, and a checkpoint round trip.

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;  // worst error or failure description
};

struct SelftestOptions {
    // Test fixture: corrupts one analytic gradient before comparison, to
    // prove the gradient check fails loudly when the backward pass is wrong.
    bool corrupt_backward = false;
};

std::vector<CheckResult> run_selftest(const SelftestOptions& options = {});
bool all_passed(const std::vector<CheckResult>& results);

// Brute-force landing distribution of a `steps`-step uniform random walk from
// `start` (adjacency lists, unweighted). Enumerates walks recursively; kept
// deliberately independent of the sparse matrix kernels it cross-checks.
std::vector<Real> brute_force_walk_distribution(const std::vector<std::vector<int>>& neighbors,
                                                int start, int steps);

// Random connected simple graphs (2..max_nodes nodes, both edge directions
// stored) with uniform node features; used by oracle and property suites.
std::vector<Graph> random_connected_graphs(int count, int max_nodes, int feature_dim,
                                           std::uint64_t seed);

}  // namespace gd
