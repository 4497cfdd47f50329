#include "gd/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gd {

void DiffuserConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("DiffuserConfig: " + msg); };
    if (input_dim < 1) fail("input_dim must be positive");
    if (hidden_dim < 1) fail("hidden_dim must be positive");
    if (num_layers < 1) fail("num_layers must be >= 1");
    if (heads < 1 || hidden_dim % heads != 0) fail("hidden_dim must divide evenly into heads");
    if (k < 1) fail("k must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0,1)");
    if (attention_dropout < 0.0 || attention_dropout >= 1.0) fail("attention_dropout must be in [0,1)");
    if (num_classes < 1) fail("num_classes must be positive");
    if (norm_type != "batch" && norm_type != "layer") fail("norm_type must be 'batch' or 'layer'");
    if (edge_ffn_layers < 1) fail("edge_ffn_layers must be >= 1");
    if (use_weighted_adjacency && edge_feature_dim < 0) fail("edge_feature_dim must be >= 0");
}

Tensor apply_norm(NormParams& norm, const Tensor& x, bool training) {
    if (norm.is_batch)
        return batch_norm(x, norm.gamma, norm.beta, norm.running_mean, norm.running_var, training);
    return layer_norm(x, norm.gamma, norm.beta);
}

namespace {

void spec_norm(ParamSpec& spec, const std::string& prefix, int channels) {
    spec.push_back({prefix + ".gamma", {channels}, ParamRole::bn_gamma});
    spec.push_back({prefix + ".beta", {channels}, ParamRole::bn_beta});
    spec.push_back({prefix + ".running_mean", {channels}, ParamRole::bn_running_mean});
    spec.push_back({prefix + ".running_var", {channels}, ParamRole::bn_running_var});
}

BatchNormParams wire_bn(ModelParams& mp, const std::string& prefix) {
    return {mp.at(prefix + ".gamma"), mp.at(prefix + ".beta"), mp.at(prefix + ".running_mean"),
            mp.at(prefix + ".running_var")};
}

NormParams wire_norm(ModelParams& mp, const std::string& prefix, bool is_batch) {
    NormParams n;
    n.is_batch = is_batch;
    n.gamma = mp.at(prefix + ".gamma");
    n.beta = mp.at(prefix + ".beta");
    n.running_mean = mp.at(prefix + ".running_mean");
    n.running_var = mp.at(prefix + ".running_var");
    return n;
}

}  // namespace

ParamSpec diffuser_param_spec(const DiffuserConfig& config) {
    config.validate();
    const int d = config.hidden_dim;
    const int dh = d / config.heads;
    const int channels = config.k + 1;
    const int ffn_hidden = config.ffn_hidden > 0 ? config.ffn_hidden : 2 * d;
    const int effn_hidden = config.edge_ffn_hidden > 0 ? config.edge_ffn_hidden : 2 * channels;

    ParamSpec spec;
    spec.push_back({"embed.weight", {config.input_dim, d}, ParamRole::linear_weight});
    spec.push_back({"embed.bias", {d}, ParamRole::bias});
    if (config.use_self_edge_encoding)
        spec.push_back({"pe.w_pe", {channels, d}, ParamRole::linear_weight});
    if (config.use_weighted_adjacency) {
        const int din = config.input_dim, de = config.edge_feature_dim;
        spec.push_back({"wadj.w1", {2 * din + de, 2 * din}, ParamRole::linear_weight});
        spec.push_back({"wadj.b1", {2 * din}, ParamRole::bias});
        spec_norm(spec, "wadj.bn", 2 * din);
        spec.push_back({"wadj.w2", {2 * din, 1}, ParamRole::linear_weight});
        spec.push_back({"wadj.b2", {1}, ParamRole::bias});
    }
    if (config.use_edge_ffn) {
        spec_norm(spec, "effn.input_bn", channels);
        for (int l = 0; l < config.edge_ffn_layers; ++l) {
            const std::string p = "effn." + std::to_string(l);
            spec.push_back({p + ".w1", {channels, effn_hidden}, ParamRole::linear_weight});
            spec.push_back({p + ".b1", {effn_hidden}, ParamRole::bias});
            spec_norm(spec, p + ".bn", effn_hidden);
            spec.push_back({p + ".w2", {effn_hidden, channels}, ParamRole::linear_weight});
            spec.push_back({p + ".b2", {channels}, ParamRole::bias});
        }
    }
    if (config.use_positional_attention && config.share_w_p)
        spec.push_back({"shared.w_p", {channels, config.heads}, ParamRole::linear_weight});
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l);
        for (int h = 0; h < config.heads; ++h) {
            const std::string hp = p + ".attn.h" + std::to_string(h);
            spec.push_back({hp + ".wq", {d, dh}, ParamRole::linear_weight});
            spec.push_back({hp + ".wk", {d, dh}, ParamRole::linear_weight});
            spec.push_back({hp + ".wv", {d, dh}, ParamRole::linear_weight});
        }
        if (config.use_positional_attention && !config.share_w_p)
            spec.push_back({p + ".attn.w_p", {channels, config.heads}, ParamRole::linear_weight});
        spec.push_back({p + ".attn.wo", {d, d}, ParamRole::linear_weight});
        spec.push_back({p + ".ffn.w1", {d, ffn_hidden}, ParamRole::linear_weight});
        spec.push_back({p + ".ffn.b1", {ffn_hidden}, ParamRole::bias});
        spec.push_back({p + ".ffn.w2", {ffn_hidden, d}, ParamRole::linear_weight});
        spec.push_back({p + ".ffn.b2", {d}, ParamRole::bias});
        spec_norm(spec, p + ".norm1", d);
        spec_norm(spec, p + ".norm2", d);
    }
    spec.push_back({"head.weight", {d, config.num_classes}, ParamRole::linear_weight});
    spec.push_back({"head.bias", {config.num_classes}, ParamRole::bias});
    return spec;
}

DiffuserModel build_model(const DiffuserConfig& config, std::uint64_t seed) {
    DiffuserModel m;
    m.config = config;
    m.params = init_params(diffuser_param_spec(config), seed);
    auto& mp = m.params;
    m.embed_w = mp.at("embed.weight");
    m.embed_b = mp.at("embed.bias");
    if (config.use_self_edge_encoding) m.pe.w_pe = mp.at("pe.w_pe");
    if (config.use_weighted_adjacency) {
        m.wadj.w1 = mp.at("wadj.w1");
        m.wadj.b1 = mp.at("wadj.b1");
        m.wadj.bn = wire_bn(mp, "wadj.bn");
        m.wadj.w2 = mp.at("wadj.w2");
        m.wadj.b2 = mp.at("wadj.b2");
    }
    if (config.use_edge_ffn) {
        m.effn.input_bn = wire_bn(mp, "effn.input_bn");
        for (int l = 0; l < config.edge_ffn_layers; ++l) {
            const std::string p = "effn." + std::to_string(l);
            EdgeFfnLayerParams layer;
            layer.w1 = mp.at(p + ".w1");
            layer.b1 = mp.at(p + ".b1");
            layer.bn = wire_bn(mp, p + ".bn");
            layer.w2 = mp.at(p + ".w2");
            layer.b2 = mp.at(p + ".b2");
            m.effn.layers.push_back(std::move(layer));
        }
    }
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l);
        LayerParams layer;
        for (int h = 0; h < config.heads; ++h) {
            const std::string hp = p + ".attn.h" + std::to_string(h);
            layer.attn.wq.push_back(mp.at(hp + ".wq"));
            layer.attn.wk.push_back(mp.at(hp + ".wk"));
            layer.attn.wv.push_back(mp.at(hp + ".wv"));
        }
        if (config.use_positional_attention)
            layer.attn.w_p = config.share_w_p ? mp.at("shared.w_p") : mp.at(p + ".attn.w_p");
        layer.attn.wo = mp.at(p + ".attn.wo");
        layer.attn.attention_dropout = config.attention_dropout;
        layer.ffn_w1 = mp.at(p + ".ffn.w1");
        layer.ffn_b1 = mp.at(p + ".ffn.b1");
        layer.ffn_w2 = mp.at(p + ".ffn.w2");
        layer.ffn_b2 = mp.at(p + ".ffn.b2");
        layer.norm1 = wire_norm(mp, p + ".norm1", config.norm_type == "batch");
        layer.norm2 = wire_norm(mp, p + ".norm2", config.norm_type == "batch");
        layer.dropout = config.dropout;
        m.layers.push_back(std::move(layer));
    }
    m.head_w = mp.at("head.weight");
    m.head_b = mp.at("head.bias");
    return m;
}

std::vector<Tensor> positional_attention(const VirtualEdges& e, const Tensor& w_p) {
    if (!e.mixed) throw std::invalid_argument("positional_attention: expected mixed virtual edges");
    if (w_p.dim(0) != e.k + 1)
        throw std::invalid_argument("positional_attention: w_p expects " +
                                    std::to_string(w_p.dim(0)) + " channels, E has " +
                                    std::to_string(e.k + 1));
    const int n = e.n, heads = w_p.dim(1);
    Tensor logits = channel_project(e.e, w_p);  // [n, n, heads]
    std::vector<Tensor> per_head;
    per_head.reserve(heads);
    for (int h = 0; h < heads; ++h)
        per_head.push_back(reshape(slice(logits, 2, h, h + 1), {n, n}));
    return per_head;
}

Tensor fused_attention(const Tensor& x, const VirtualEdges* e, const AttentionLayerParams& params,
                       const std::vector<std::uint8_t>* block_mask, bool training, Rng* rng,
                       AttentionRecord* record) {
    const int n = x.dim(0);
    const int heads = static_cast<int>(params.wq.size());
    const int dh = params.wq.front().dim(1);
    const bool positional = params.w_p.defined() && e != nullptr;
    if (params.w_p.defined() && !e)
        throw std::invalid_argument("fused_attention: positional projection without virtual edges");
    if (block_mask && static_cast<std::int64_t>(block_mask->size()) !=
                          static_cast<std::int64_t>(n) * n)
        throw std::invalid_argument("fused_attention: block mask size mismatch");

    Tensor mask_t;
    if (block_mask) {
        std::vector<Real> mv(block_mask->size());
        for (size_t i = 0; i < mv.size(); ++i) mv[i] = (*block_mask)[i] ? 1.0 : 0.0;
        mask_t = Tensor::from_data({n, n}, std::move(mv));
    }

    std::vector<Tensor> pos;
    if (positional) pos = positional_attention(*e, params.w_p);

    if (record) record->clear();
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor q = matmul(x, params.wq[h]);
        Tensor k = matmul(x, params.wk[h]);
        Tensor v = matmul(x, params.wv[h]);
        Tensor content = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<Real>(dh)));
        Tensor att = gated_softmax(content, positional ? &pos[h] : nullptr,
                                   mask_t.defined() ? &mask_t : nullptr);
        if (record) record->push_back(att.value());
        att = dropout(att, params.attention_dropout, training, *rng);
        head_outs.push_back(matmul(att, v));
    }
    Tensor out = heads == 1 ? head_outs.front() : concat(head_outs, 1);
    return matmul(out, params.wo);
}

namespace {

// Residual + norm blocks around a precomputed attention output.
Tensor layer_tail(const Tensor& x, const Tensor& att_out, LayerParams& params, bool training,
                  Rng* rng) {
    Tensor h = apply_norm(params.norm1, add(x, dropout(att_out, params.dropout, training, *rng)),
                          training);
    Tensor f = linear(relu(linear(h, params.ffn_w1, params.ffn_b1)), params.ffn_w2,
                      params.ffn_b2);
    return apply_norm(params.norm2, add(h, dropout(f, params.dropout, training, *rng)), training);
}

Rng g_null_rng;  // used when no dropout can fire (p == 0 draws nothing)

}  // namespace

Tensor diffuser_layer(const Tensor& x, const VirtualEdges* e, LayerParams& params,
                      const std::vector<std::uint8_t>* block_mask, bool training, Rng* rng) {
    if (!rng) rng = &g_null_rng;
    Tensor att = fused_attention(x, e, params.attn, block_mask, training, rng);
    return layer_tail(x, att, params, training, rng);
}

Tensor forward(DiffuserModel& model, const BatchedGraph& batch, bool training, Rng* rng,
               ForwardTrace* trace) {
    const auto& cfg = model.config;
    if (batch.feature_dim != cfg.input_dim)
        throw std::invalid_argument("forward: batch feature dim " +
                                    std::to_string(batch.feature_dim) + " vs config input_dim " +
                                    std::to_string(cfg.input_dim));
    if (!rng) rng = &g_null_rng;
    const int num_graphs = batch.num_graphs();
    const int N = batch.total_nodes;

    Tensor x_in = Tensor::from_data({N, cfg.input_dim}, batch.node_features);

    // Virtual edges per member graph; adjacency is learned over the whole
    // batch at once (all stored edges are intra-graph).
    std::vector<VirtualEdges> edges;
    if (cfg.needs_virtual_edges()) {
        edges.reserve(num_graphs);
        if (cfg.use_weighted_adjacency) {
            auto pattern = std::make_shared<SparseRowMatrix>(batch_adjacency(batch));
            std::optional<Tensor> efeat;
            if (cfg.edge_feature_dim > 0) {
                std::vector<Tensor> parts;
                for (int g = 0; g < num_graphs; ++g) {
                    SparseRowMatrix ag = build_csr(batch.graphs[g].edges,
                                                   batch.graphs[g].num_nodes, true);
                    auto f = edge_features_for_pattern(batch.graphs[g], ag);
                    if (!f)
                        throw std::invalid_argument("forward: config expects edge features, graph " +
                                                    std::to_string(g) + " has none");
                    parts.push_back(*f);
                }
                efeat = parts.size() == 1 ? parts.front() : concat(parts, 0);
            }
            LearnedAdjacency learned = weighted_adjacency(x_in, efeat ? &*efeat : nullptr, pattern,
                                                          model.wadj, training);
            for (int g = 0; g < num_graphs; ++g) {
                const int off = batch.node_offsets[g], ng = batch.graph_size(g);
                auto sub = std::make_shared<SparseRowMatrix>();
                sub->num_rows = sub->num_cols = ng;
                sub->row_offsets.assign(ng + 1, 0);
                const auto base = pattern->row_offsets[off];
                for (int r = 0; r < ng; ++r)
                    sub->row_offsets[r + 1] = pattern->row_offsets[off + r + 1] - base;
                for (auto i = base; i < pattern->row_offsets[off + ng]; ++i)
                    sub->col_indices.push_back(pattern->col_indices[i] - off);
                sub->values.assign(sub->col_indices.size(), 0.0);
                Tensor vals = slice(learned.values, 0, static_cast<int>(base),
                                    static_cast<int>(pattern->row_offsets[off + ng]));
                edges.push_back(stack_powers(std::move(sub), vals, cfg.k));
            }
        } else {
            for (int g = 0; g < num_graphs; ++g) {
                SparseRowMatrix a = row_normalize(
                    build_csr(batch.graphs[g].edges, batch.graphs[g].num_nodes, true));
                edges.push_back(stack_powers(a, cfg.k));
            }
        }
        if (trace) trace->raw_edges = edges;
        if (cfg.use_edge_ffn) edges = edge_ffn_batch(edges, model.effn, training);
        else
            for (auto& e : edges) e.mixed = true;  // fed to attention/PE as-is
        if (trace) trace->mixed_edges = edges;
    }

    Tensor x = linear(x_in, model.embed_w, model.embed_b);
    if (cfg.use_self_edge_encoding) {
        std::vector<Tensor> pes;
        pes.reserve(num_graphs);
        for (int g = 0; g < num_graphs; ++g) pes.push_back(self_edge_encoding(edges[g], model.pe));
        Tensor pe_all = pes.size() == 1 ? pes.front() : concat(pes, 0);
        if (trace) trace->pe_out = pe_all;
        x = add(x, pe_all);
    }

    if (trace) trace->attention.assign(cfg.num_layers, {});
    for (int l = 0; l < cfg.num_layers; ++l) {
        auto& layer = model.layers[l];
        Tensor att;
        if (num_graphs == 1) {
            AttentionRecord rec;
            att = fused_attention(x, edges.empty() ? nullptr : &edges[0], layer.attn, nullptr,
                                  training, rng, trace ? &rec : nullptr);
            if (trace) trace->attention[l].push_back(std::move(rec));
        } else {
            // Cross-graph attention mass is exactly zero, so the batched
            // attention decomposes into per-graph blocks.
            std::vector<Tensor> outs;
            outs.reserve(num_graphs);
            for (int g = 0; g < num_graphs; ++g) {
                const int off = batch.node_offsets[g];
                Tensor xg = slice(x, 0, off, off + batch.graph_size(g));
                AttentionRecord rec;
                outs.push_back(fused_attention(xg, edges.empty() ? nullptr : &edges[g], layer.attn,
                                               nullptr, training, rng, trace ? &rec : nullptr));
                if (trace) trace->attention[l].push_back(std::move(rec));
            }
            att = concat(outs, 0);
        }
        x = layer_tail(x, att, layer, training, rng);
    }
    return linear(x, model.head_w, model.head_b);
}

}  // namespace gd
