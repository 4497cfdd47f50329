#include "gd/virtual_edges.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gd {

LearnedAdjacency weighted_adjacency(const Tensor& x, const Tensor* edge_features,
                                    std::shared_ptr<const SparseRowMatrix> a_pattern,
                                    WeightedAdjParams& params, bool training) {
    if (!a_pattern) throw std::invalid_argument("weighted_adjacency: null pattern");
    const auto& a = *a_pattern;
    if (x.rank() != 2 || x.dim(0) != a.num_rows)
        throw std::invalid_argument("weighted_adjacency: features " + shape_str(x.shape()) +
                                    " do not match " + std::to_string(a.num_rows) + " nodes");
    const auto nnz = a.nnz();
    std::vector<int> src(nnz), dst(nnz);
    for (int r = 0; r < a.num_rows; ++r)
        for (auto e = a.row_begin(r); e < a.row_end(r); ++e) {
            src[e] = r;
            dst[e] = a.col_indices[e];
        }

    std::vector<Tensor> parts = {gather_rows(x, std::move(src)), gather_rows(x, std::move(dst))};
    if (edge_features) {
        if (edge_features->rank() != 2 || edge_features->dim(0) != nnz)
            throw std::invalid_argument("weighted_adjacency: edge features " +
                                        shape_str(edge_features->shape()) + " for " +
                                        std::to_string(nnz) + " stored edges");
        parts.push_back(*edge_features);
    }
    Tensor f = concat(parts, 1);
    if (f.dim(1) != params.w1.dim(0))
        throw std::invalid_argument("weighted_adjacency: concat width " +
                                    std::to_string(f.dim(1)) + " vs w1 rows " +
                                    std::to_string(params.w1.dim(0)));

    Tensor h = relu(batch_norm(linear(f, params.w1, params.b1), params.bn.gamma,
                               params.bn.beta, params.bn.running_mean, params.bn.running_var,
                               training));
    Tensor score = linear(h, params.w2, params.b2);
    Tensor gate = reshape(sigmoid(score), {static_cast<int>(nnz)});

    LearnedAdjacency out;
    out.pattern = std::move(a_pattern);
    out.values = segment_l1_normalize(gate, out.pattern->row_offsets);
    return out;
}

VirtualEdges stack_powers(std::shared_ptr<const SparseRowMatrix> pattern, const Tensor& values,
                          int k) {
    if (k < 1) throw std::invalid_argument("stack_powers: k must be >= 1, got " + std::to_string(k));
    if (!pattern) throw std::invalid_argument("stack_powers: null pattern");
    const int n = pattern->num_rows;

    std::vector<Real> ident(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) ident[static_cast<size_t>(i) * n + i] = 1.0;
    std::vector<Tensor> slices;
    slices.reserve(k + 1);
    slices.push_back(Tensor::from_data({n, n}, std::move(ident)));
    for (int t = 1; t <= k; ++t) slices.push_back(spmm(pattern, values, slices.back()));

    VirtualEdges ve;
    ve.e = stack_last(slices);
    ve.n = n;
    ve.k = k;
    ve.mixed = false;
    return ve;
}

VirtualEdges stack_powers(const SparseRowMatrix& a, int k) {
    auto pattern = std::make_shared<SparseRowMatrix>(a);
    Tensor values = Tensor::from_data({static_cast<int>(a.nnz())}, a.values);
    return stack_powers(std::move(pattern), values, k);
}

VirtualEdges stack_powers(const LearnedAdjacency& a, int k) {
    return stack_powers(a.pattern, a.values, k);
}

namespace {

// The edge FFN runs on every (i,j) slot of every graph in every step; it
// dominates the training profile, so the whole residual stack is one fused
// tape node with a hand-written backward. Layout per layer l over the flat
// [S, C] slot matrix (C = k+1, H = hidden):
//   a_l = y_l W1_l + b1_l; n_l = BN_l(a_l); r_l = relu(n_l)
//   y_{l+1} = r_l W2_l + b2_l + y_l
// with y_0 = BN_in(x). Batch statistics are biased, momentum 0.1, as in
// batch_norm().

constexpr Real kBnEps = 1e-5;
constexpr Real kBnMomentum = 0.1;

struct BnStash {
    std::vector<Real> xhat;     // [S, M]
    std::vector<Real> inv_std;  // [M]
};

// Normalizes `a` in place into gamma*xhat+beta, filling the stash. Updates
// running stats when training.
void bn_fwd(std::vector<Real>& a, std::int64_t s_count, std::int64_t m, const Tensor& gamma,
            const Tensor& beta, Tensor& running_mean, Tensor& running_var, bool training,
            BnStash& stash) {
    std::vector<Real> mean(m), var(m);
    if (training) {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::int64_t i = 0; i < s_count; ++i) {
            const Real* row = a.data() + i * m;
            for (std::int64_t c = 0; c < m; ++c) mean[c] += row[c];
        }
        for (std::int64_t c = 0; c < m; ++c) mean[c] /= static_cast<Real>(s_count);
        for (std::int64_t i = 0; i < s_count; ++i) {
            const Real* row = a.data() + i * m;
            for (std::int64_t c = 0; c < m; ++c) {
                const Real d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        for (std::int64_t c = 0; c < m; ++c) var[c] /= static_cast<Real>(s_count);
        auto& rm = running_mean.mutable_value();
        auto& rv = running_var.mutable_value();
        for (std::int64_t c = 0; c < m; ++c) {
            rm[c] = (1.0 - kBnMomentum) * rm[c] + kBnMomentum * mean[c];
            rv[c] = (1.0 - kBnMomentum) * rv[c] + kBnMomentum * var[c];
        }
    } else {
        mean = running_mean.value();
        var = running_var.value();
    }
    stash.inv_std.resize(m);
    for (std::int64_t c = 0; c < m; ++c) stash.inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEps);
    stash.xhat.resize(a.size());
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (std::int64_t i = 0; i < s_count; ++i) {
        Real* row = a.data() + i * m;
        Real* h = stash.xhat.data() + i * m;
        for (std::int64_t c = 0; c < m; ++c) {
            h[c] = (row[c] - mean[c]) * stash.inv_std[c];
            row[c] = gv[c] * h[c] + bv[c];
        }
    }
}

// Given go = dL/d(BN output), accumulates dgamma/dbeta and writes
// da = dL/d(BN input) in place into go.
void bn_bwd(std::vector<Real>& go, std::int64_t s_count, std::int64_t m, const BnStash& stash,
            const std::vector<Real>& gamma, bool training, detail::Node* pgamma,
            detail::Node* pbeta) {
    std::vector<Real> dgam(m, 0.0), dbet(m, 0.0);
    for (std::int64_t i = 0; i < s_count; ++i) {
        const Real* g = go.data() + i * m;
        const Real* h = stash.xhat.data() + i * m;
        for (std::int64_t c = 0; c < m; ++c) {
            dgam[c] += g[c] * h[c];
            dbet[c] += g[c];
        }
    }
    if (pgamma->requires_grad) {
        auto& d = pgamma->ensure_grad();
        for (std::int64_t c = 0; c < m; ++c) d[c] += dgam[c];
    }
    if (pbeta->requires_grad) {
        auto& d = pbeta->ensure_grad();
        for (std::int64_t c = 0; c < m; ++c) d[c] += dbet[c];
    }
    if (!training) {
        for (std::int64_t i = 0; i < s_count; ++i) {
            Real* g = go.data() + i * m;
            for (std::int64_t c = 0; c < m; ++c) g[c] *= gamma[c] * stash.inv_std[c];
        }
        return;
    }
    // s1 = gamma * colsum(go), s2 = gamma * colsum(go * xhat), both already
    // in dbet/dgam up to the gamma factor.
    for (std::int64_t i = 0; i < s_count; ++i) {
        Real* g = go.data() + i * m;
        const Real* h = stash.xhat.data() + i * m;
        for (std::int64_t c = 0; c < m; ++c) {
            const Real s1 = gamma[c] * dbet[c];
            const Real s2 = gamma[c] * dgam[c];
            g[c] = stash.inv_std[c] *
                   (gamma[c] * g[c] - (s1 + h[c] * s2) / static_cast<Real>(s_count));
        }
    }
}

// C[m,n] += A[m,k] @ B[k,n], raw pointers.
void acc_nn(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k,
            std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        Real* crow = c + i * n;
        for (std::int64_t l = 0; l < k; ++l) {
            const Real av = arow[l];
            const Real* brow = b + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor edge_ffn_fused(const Tensor& x, EdgeFfnParams& params, bool training) {
    const std::int64_t S = x.dim(0), C = x.dim(1);
    const int L = static_cast<int>(params.layers.size());
    const std::int64_t H = params.layers.front().w1.dim(1);

    std::vector<Tensor> parents = {x, params.input_bn.gamma, params.input_bn.beta};
    for (auto& layer : params.layers) {
        parents.push_back(layer.w1);
        parents.push_back(layer.b1);
        parents.push_back(layer.bn.gamma);
        parents.push_back(layer.bn.beta);
        parents.push_back(layer.w2);
        parents.push_back(layer.b2);
    }

    BnStash in_stash;
    std::vector<BnStash> stash(L);
    std::vector<std::vector<Real>> ys(L + 1);  // y_0 .. y_L
    std::vector<std::vector<Real>> rs(L);      // relu outputs

    ys[0] = x.value();
    bn_fwd(ys[0], S, C, params.input_bn.gamma, params.input_bn.beta,
           params.input_bn.running_mean, params.input_bn.running_var, training, in_stash);
    for (int l = 0; l < L; ++l) {
        auto& layer = params.layers[l];
        std::vector<Real> a(static_cast<size_t>(S) * H);
        for (std::int64_t i = 0; i < S; ++i)
            std::copy_n(layer.b1.value().data(), H, a.data() + i * H);
        acc_nn(ys[l].data(), layer.w1.value().data(), a.data(), S, C, H);
        bn_fwd(a, S, H, layer.bn.gamma, layer.bn.beta, layer.bn.running_mean,
               layer.bn.running_var, training, stash[l]);
        for (auto& v : a) v = v > 0.0 ? v : 0.0;
        rs[l] = std::move(a);
        ys[l + 1].resize(static_cast<size_t>(S) * C);
        for (std::int64_t i = 0; i < S; ++i) {
            Real* row = ys[l + 1].data() + i * C;
            const Real* prev = ys[l].data() + i * C;
            const Real* b2 = layer.b2.value().data();
            for (std::int64_t c = 0; c < C; ++c) row[c] = prev[c] + b2[c];
        }
        acc_nn(rs[l].data(), layer.w2.value().data(), ys[l + 1].data(), S, H, C);
    }

    std::vector<Real> out = ys[L];
    return make_op_node(
        x.shape(), std::move(out), std::move(parents),
        [S, C, H, L, training, in_stash = std::move(in_stash), stash = std::move(stash),
         ys = std::move(ys), rs = std::move(rs)](detail::Node& self) {
            std::vector<Real> g = self.grad;  // dL/dy_L, reused down the stack
            for (int l = L - 1; l >= 0; --l) {
                detail::Node* w1 = self.parents[3 + 6 * l].get();
                detail::Node* b1 = self.parents[4 + 6 * l].get();
                detail::Node* bn_gamma = self.parents[5 + 6 * l].get();
                detail::Node* bn_beta = self.parents[6 + 6 * l].get();
                detail::Node* w2 = self.parents[7 + 6 * l].get();
                detail::Node* b2 = self.parents[8 + 6 * l].get();

                if (b2->requires_grad) {
                    auto& d = b2->ensure_grad();
                    for (std::int64_t i = 0; i < S; ++i)
                        for (std::int64_t c = 0; c < C; ++c) d[c] += g[i * C + c];
                }
                if (w2->requires_grad) {  // dW2 += r^T g
                    auto& d = w2->ensure_grad();
                    for (std::int64_t i = 0; i < S; ++i) {
                        const Real* r = rs[l].data() + i * H;
                        const Real* gi = g.data() + i * C;
                        for (std::int64_t h = 0; h < H; ++h) {
                            Real* drow = d.data() + h * C;
                            const Real rv = r[h];
                            if (rv == 0.0) continue;
                            for (std::int64_t c = 0; c < C; ++c) drow[c] += rv * gi[c];
                        }
                    }
                }
                // dn = (g @ W2^T) gated by relu, then BN backward -> da
                std::vector<Real> da(static_cast<size_t>(S) * H);
                const auto& w2v = w2->value;
                for (std::int64_t i = 0; i < S; ++i) {
                    const Real* gi = g.data() + i * C;
                    const Real* r = rs[l].data() + i * H;
                    Real* dai = da.data() + i * H;
                    for (std::int64_t h = 0; h < H; ++h) {
                        if (r[h] == 0.0) {
                            dai[h] = 0.0;
                            continue;
                        }
                        const Real* wrow = w2v.data() + h * C;
                        Real dot = 0.0;
                        for (std::int64_t c = 0; c < C; ++c) dot += gi[c] * wrow[c];
                        dai[h] = dot;
                    }
                }
                bn_bwd(da, S, H, stash[l], bn_gamma->value, training, bn_gamma, bn_beta);
                if (b1->requires_grad) {
                    auto& d = b1->ensure_grad();
                    for (std::int64_t i = 0; i < S; ++i)
                        for (std::int64_t h = 0; h < H; ++h) d[h] += da[i * H + h];
                }
                if (w1->requires_grad) {  // dW1 += y_l^T da
                    auto& d = w1->ensure_grad();
                    for (std::int64_t i = 0; i < S; ++i) {
                        const Real* y = ys[l].data() + i * C;
                        const Real* dai = da.data() + i * H;
                        for (std::int64_t c = 0; c < C; ++c) {
                            const Real yv = y[c];
                            if (yv == 0.0) continue;
                            Real* drow = d.data() + c * H;
                            for (std::int64_t h = 0; h < H; ++h) drow[h] += yv * dai[h];
                        }
                    }
                }
                // g_{l} = da @ W1^T + g_{l+1}
                const auto& w1v = w1->value;
                for (std::int64_t i = 0; i < S; ++i) {
                    const Real* dai = da.data() + i * H;
                    Real* gi = g.data() + i * C;
                    for (std::int64_t c = 0; c < C; ++c) {
                        Real dot = 0.0;
                        const Real* wrow = w1v.data() + c * H;
                        for (std::int64_t h = 0; h < H; ++h) dot += dai[h] * wrow[h];
                        gi[c] += dot;
                    }
                }
            }
            detail::Node* in_gamma = self.parents[1].get();
            detail::Node* in_beta = self.parents[2].get();
            bn_bwd(g, S, C, in_stash, in_gamma->value, training, in_gamma, in_beta);
            detail::Node* px = self.parents[0].get();
            if (px->requires_grad) {
                auto& d = px->ensure_grad();
                for (size_t i = 0; i < d.size(); ++i) d[i] += g[i];
            }
        });
}

// Residual edge-FFN applied to a flat [slots, k+1] view.
Tensor edge_ffn_core(Tensor slots, EdgeFfnParams& params, bool training) {
    return edge_ffn_fused(slots, params, training);
}

void check_edge_ffn_input(const VirtualEdges& e, const EdgeFfnParams& params) {
    if (e.mixed) throw std::invalid_argument("edge_ffn: input already mixed");
    const int channels = e.k + 1;
    if (params.layers.empty() || params.layers.front().w1.dim(0) != channels)
        throw std::invalid_argument("edge_ffn: channel mismatch, E has " +
                                    std::to_string(channels) + " channels, w1 expects " +
                                    std::to_string(params.layers.empty()
                                                       ? 0
                                                       : params.layers.front().w1.dim(0)));
}

}  // namespace

VirtualEdges edge_ffn(const VirtualEdges& e, EdgeFfnParams& params, bool training) {
    check_edge_ffn_input(e, params);
    const int slots = e.n * e.n, channels = e.k + 1;
    Tensor flat = edge_ffn_core(reshape(e.e, {slots, channels}), params, training);
    VirtualEdges out;
    out.e = reshape(flat, {e.n, e.n, channels});
    out.n = e.n;
    out.k = e.k;
    out.mixed = true;
    return out;
}

std::vector<VirtualEdges> edge_ffn_batch(const std::vector<VirtualEdges>& blocks,
                                         EdgeFfnParams& params, bool training) {
    if (blocks.empty()) throw std::invalid_argument("edge_ffn_batch: no blocks");
    if (blocks.size() == 1) return {edge_ffn(blocks.front(), params, training)};
    const int channels = blocks.front().k + 1;
    std::vector<Tensor> flats;
    flats.reserve(blocks.size());
    for (const auto& b : blocks) {
        check_edge_ffn_input(b, params);
        if (b.k + 1 != channels) throw std::invalid_argument("edge_ffn_batch: mixed channel counts");
        flats.push_back(reshape(b.e, {b.n * b.n, channels}));
    }
    Tensor joint = edge_ffn_core(concat(flats, 0), params, training);
    std::vector<VirtualEdges> out(blocks.size());
    int row = 0;
    for (size_t g = 0; g < blocks.size(); ++g) {
        const int slots = blocks[g].n * blocks[g].n;
        out[g].e = reshape(slice(joint, 0, row, row + slots),
                           {blocks[g].n, blocks[g].n, channels});
        out[g].n = blocks[g].n;
        out[g].k = blocks[g].k;
        out[g].mixed = true;
        row += slots;
    }
    return out;
}

Tensor self_edge_encoding(const VirtualEdges& e, const PeParams& pe) {
    if (!e.mixed) throw std::invalid_argument("self_edge_encoding: expected mixed virtual edges");
    if (pe.w_pe.dim(0) != e.k + 1)
        throw std::invalid_argument("self_edge_encoding: w_pe expects " +
                                    std::to_string(pe.w_pe.dim(0)) + " channels, E has " +
                                    std::to_string(e.k + 1));
    return relu(matmul(take_diag_slots(e.e), pe.w_pe));
}

std::optional<Tensor> edge_features_for_pattern(const Graph& g, const SparseRowMatrix& pattern) {
    if (g.edge_feature_dim == 0) return std::nullopt;
    std::map<std::pair<int, int>, size_t> by_pair;
    for (size_t e = 0; e < g.edges.size(); ++e) by_pair[{g.edges[e][0], g.edges[e][1]}] = e;

    const int d = g.edge_feature_dim;
    std::vector<Real> rows(static_cast<size_t>(pattern.nnz()) * d);
    for (int r = 0; r < pattern.num_rows; ++r)
        for (auto e = pattern.row_begin(r); e < pattern.row_end(r); ++e) {
            auto it = by_pair.find({r, pattern.col_indices[e]});
            if (it == by_pair.end()) {
                // Mirrored entry of an undirected edge shares its features.
                it = by_pair.find({pattern.col_indices[e], r});
                if (it == by_pair.end())
                    throw std::invalid_argument("edge_features_for_pattern: no features for edge (" +
                                                std::to_string(r) + "," +
                                                std::to_string(pattern.col_indices[e]) + ")");
            }
            std::copy_n(g.edge_features.begin() + static_cast<std::int64_t>(it->second) * d, d,
                        rows.begin() + e * d);
        }
    return Tensor::from_data({static_cast<int>(pattern.nnz()), d}, std::move(rows));
}

}  // namespace gd
