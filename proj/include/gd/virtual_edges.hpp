#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "gd/graph.hpp"
#include "gd/ops.hpp"
#include "gd/tensor.hpp"

namespace gd {

// Stacked walk probabilities for one graph: e is [n, n, k+1] channel-last,
// slice t holding the t-step landing probabilities (slice 0 = identity)
// before mixing, arbitrary mixed channels afterwards.
struct VirtualEdges {
    Tensor e;
    int n = 0;
    int k = 0;
    bool mixed = false;
};

struct BatchNormParams {
    Tensor gamma, beta, running_mean, running_var;
};

// Eq-style edge scorer: linear -> BN -> ReLU -> linear -> sigmoid, then L1
// row normalization over each node's stored edges.
struct WeightedAdjParams {
    Tensor w1;  // [(2d + d_edge), 2d]
    Tensor b1;  // [2d]
    BatchNormParams bn;
    Tensor w2;  // [2d, 1]
    Tensor b2;  // [1]
};

struct EdgeFfnLayerParams {
    Tensor w1, b1;  // [(k+1), h_e], [h_e]
    BatchNormParams bn;
    Tensor w2, b2;  // [h_e, (k+1)], [k+1]
};

struct EdgeFfnParams {
    BatchNormParams input_bn;  // over k+1 channels
    std::vector<EdgeFfnLayerParams> layers;
};

struct PeParams {
    Tensor w_pe;  // [(k+1), d]
};

// Adjacency with learned, differentiable entry weights over a fixed binary
// pattern.
struct LearnedAdjacency {
    std::shared_ptr<const SparseRowMatrix> pattern;
    Tensor values;  // [nnz], rows L1-normalized
};

// Learns edge weights from endpoint (and edge) features: per stored edge
// (i,j), sigmoid(linear(relu(bn(linear([x_i ; x_j ; e_ij]))))), then L1
// normalization over each row. The output pattern is exactly a_pattern's.
// With no edge features the concatenation is [x_i ; x_j] only.
LearnedAdjacency weighted_adjacency(const Tensor& x, const Tensor* edge_features,
                                    std::shared_ptr<const SparseRowMatrix> a_pattern,
                                    WeightedAdjParams& params, bool training);

// E = [I | A | A^2 | .. | A^k] by repeated sparse-by-dense multiplication,
// differentiable with respect to the adjacency values. k < 1 is rejected.
VirtualEdges stack_powers(std::shared_ptr<const SparseRowMatrix> pattern, const Tensor& values,
                          int k);
VirtualEdges stack_powers(const SparseRowMatrix& a, int k);
VirtualEdges stack_powers(const LearnedAdjacency& a, int k);

// Edge-wise FFN: batch norm on the input channels, then `layers` residual
// blocks of linear -> BN -> ReLU -> linear, applied identically to every
// (i,j) slot. Applied once, before any transformer layer. Requires raw
// (unmixed) input and matching channel count.
VirtualEdges edge_ffn(const VirtualEdges& e, EdgeFfnParams& params, bool training);

// Same network over several graphs at once with shared batch statistics;
// only intra-graph slots exist in this representation, so the statistics
// cover exactly those.
std::vector<VirtualEdges> edge_ffn_batch(const std::vector<VirtualEdges>& blocks,
                                         EdgeFfnParams& params, bool training);

// ReLU(E_ii W_pe) per node; the caller adds it to the node embeddings.
Tensor self_edge_encoding(const VirtualEdges& e, const PeParams& pe);

// Edge features reordered to match a CSR pattern's entry order. Returns an
// empty optional when the graph carries no edge features; throws if an entry
// of the pattern has no feature row.
std::optional<Tensor> edge_features_for_pattern(const Graph& g, const SparseRowMatrix& pattern);

}  // namespace gd
