#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gd/graph.hpp"
#include "gd/params.hpp"
#include "gd/virtual_edges.hpp"

namespace gd {

struct DiffuserConfig {
    int input_dim = 0;
    int hidden_dim = 32;
    int num_layers = 3;
    int heads = 4;
    int k = 16;  // walk power stacks
    Real dropout = 0.0;
    Real attention_dropout = 0.0;
    bool use_weighted_adjacency = false;
    bool use_positional_attention = true;
    bool use_self_edge_encoding = true;
    bool use_edge_ffn = true;
    bool share_w_p = false;           // one positional projection for all layers
    std::string norm_type = "batch";  // "batch" or "layer"
    int ffn_hidden = 0;               // 0 -> 2 * hidden_dim
    int edge_ffn_hidden = 0;          // 0 -> 2 * (k+1)
    int edge_ffn_layers = 2;
    int num_classes = 0;
    int edge_feature_dim = 0;  // only consumed by the weighted adjacency

    bool needs_virtual_edges() const { return use_positional_attention || use_self_edge_encoding; }
    void validate() const;  // throws std::invalid_argument
};

// Post-residual normalization; batch norm by default, layer norm as the
// config alternative (running stats unused there).
struct NormParams {
    bool is_batch = true;
    Tensor gamma, beta, running_mean, running_var;
};

Tensor apply_norm(NormParams& norm, const Tensor& x, bool training);

struct AttentionLayerParams {
    std::vector<Tensor> wq, wk, wv;  // per head, [d, d_h]
    Tensor w_p;                      // [(k+1), heads]; undefined when disabled
    Tensor wo;                       // [d, d]
    Real attention_dropout = 0.0;
};

struct LayerParams {
    AttentionLayerParams attn;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    NormParams norm1, norm2;
    Real dropout = 0.0;
};

struct DiffuserModel {
    DiffuserConfig config;
    ModelParams params;  // registry; the handles below alias its tensors
    Tensor embed_w, embed_b;
    PeParams pe;
    WeightedAdjParams wadj;
    EdgeFfnParams effn;
    std::vector<LayerParams> layers;
    Tensor head_w, head_b;
};

// Every named tensor of the model in registration order.
ParamSpec diffuser_param_spec(const DiffuserConfig& config);

DiffuserModel build_model(const DiffuserConfig& config, std::uint64_t seed);

// Per-head positional logits E_ij W_p, one [n,n] tensor per head.
std::vector<Tensor> positional_attention(const VirtualEdges& e, const Tensor& w_p);

// Captured forward internals for dumps and inspection.
struct ForwardTrace {
    // attention[layer][graph][head], row-major [n_g, n_g]
    std::vector<std::vector<std::vector<std::vector<Real>>>> attention;
    std::vector<VirtualEdges> raw_edges;
    std::vector<VirtualEdges> mixed_edges;
    Tensor pe_out;  // [N, d]; undefined when the encoding is disabled
};

// Attention values for one node block, collected per head.
using AttentionRecord = std::vector<std::vector<Real>>;

// Sigmoid-gated softmax attention over one contiguous node set:
// att = l1_row_normalize(exp(content - rowmax) * sigmoid(positional) * mask),
// content = QK^T / sqrt(d_h) per head. Without virtual edges (e == nullptr or
// no w_p) the gate is dropped and this is plain softmax attention. block_mask
// is n*n row-major; masked pairs get exactly zero weight.
Tensor fused_attention(const Tensor& x, const VirtualEdges* e, const AttentionLayerParams& params,
                       const std::vector<std::uint8_t>* block_mask, bool training, Rng* rng,
                       AttentionRecord* record = nullptr);

// Full transformer layer: post-residual norm around attention and the FFN.
Tensor diffuser_layer(const Tensor& x, const VirtualEdges* e, LayerParams& params,
                      const std::vector<std::uint8_t>* block_mask, bool training, Rng* rng);

// Whole-model forward over a batch: adjacency (learned or plain row-normal-
// ized), stacked powers, edge FFN, embedding + self-edge encoding, L layers
// sharing the same virtual edges, node-level head. Returns [N, num_classes].
Tensor forward(DiffuserModel& model, const BatchedGraph& batch, bool training, Rng* rng = nullptr,
               ForwardTrace* trace = nullptr);

}  // namespace gd
