#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gd/graph.hpp"
#include "gd/rng.hpp"
#include "gd/tensor.hpp"

namespace gdt {

using gd::Graph;
using gd::Real;
using gd::Tensor;

inline Graph path_graph(int n, int feature_dim = 1) {
    Graph g;
    g.num_nodes = n;
    g.feature_dim = feature_dim;
    g.node_features.assign(static_cast<size_t>(n) * feature_dim, 1.0);
    for (int i = 0; i + 1 < n; ++i) {
        g.edges.push_back({i, i + 1});
        g.edges.push_back({i + 1, i});
    }
    return g;
}

inline Tensor random_tensor(gd::Shape shape, gd::Rng& rng, bool requires_grad = false,
                            Real lo = -1.0, Real hi = 1.0) {
    std::vector<Real> v(gd::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

inline Real max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
    Real m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline std::vector<Real> dense_from_csr(const gd::SparseRowMatrix& m) {
    std::vector<Real> d(static_cast<size_t>(m.num_rows) * m.num_cols, 0.0);
    for (int r = 0; r < m.num_rows; ++r)
        for (auto i = m.row_begin(r); i < m.row_end(r); ++i)
            d[static_cast<size_t>(r) * m.num_cols + m.col_indices[i]] = m.values[i];
    return d;
}

// Node relabeling: node i of the input becomes perm[i] of the output.
inline Graph permute_graph(const Graph& g, const std::vector<int>& perm) {
    Graph out;
    out.num_nodes = g.num_nodes;
    out.feature_dim = g.feature_dim;
    out.node_features.resize(g.node_features.size());
    out.labels.resize(g.labels.size());
    for (int i = 0; i < g.num_nodes; ++i) {
        for (int f = 0; f < g.feature_dim; ++f)
            out.node_features[static_cast<size_t>(perm[i]) * g.feature_dim + f] = g.feature(i, f);
        if (!g.labels.empty()) out.labels[perm[i]] = g.labels[i];
    }
    for (const auto& [s, d] : g.edges) out.edges.push_back({perm[s], perm[d]});
    std::sort(out.edges.begin(), out.edges.end());
    out.attrs = g.attrs;
    return out;
}

inline std::vector<int> random_permutation(int n, gd::Rng& rng) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n; i > 1; --i) std::swap(p[i - 1], p[rng.next_below(i)]);
    return p;
}

}  // namespace gdt
