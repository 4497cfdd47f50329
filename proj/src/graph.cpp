#include "gd/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gd {

std::vector<std::uint8_t> BatchedGraph::block_mask() const {
    const auto n = static_cast<size_t>(total_nodes);
    std::vector<std::uint8_t> mask(n * n, 0);
    for (int g = 0; g < num_graphs(); ++g) {
        for (int i = node_offsets[g]; i < node_offsets[g + 1]; ++i) {
            std::uint8_t* row = mask.data() + static_cast<size_t>(i) * n;
            for (int j = node_offsets[g]; j < node_offsets[g + 1]; ++j) row[j] = 1;
        }
    }
    return mask;
}

SparseRowMatrix build_csr(const std::vector<std::array<int, 2>>& edge_list, int num_nodes,
                          bool symmetric) {
    if (num_nodes < 1) throw std::invalid_argument("build_csr: num_nodes must be >= 1");
    for (size_t e = 0; e < edge_list.size(); ++e) {
        const auto [s, d] = edge_list[e];
        if (s < 0 || s >= num_nodes || d < 0 || d >= num_nodes)
            throw std::out_of_range("build_csr: edge " + std::to_string(e) + " = (" +
                                    std::to_string(s) + "," + std::to_string(d) +
                                    ") out of range for " + std::to_string(num_nodes) + " nodes");
    }

    std::vector<std::array<int, 2>> pairs;
    pairs.reserve(edge_list.size() * (symmetric ? 2 : 1));
    for (const auto& e : edge_list) {
        pairs.push_back(e);
        if (symmetric) pairs.push_back({e[1], e[0]});
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    SparseRowMatrix m;
    m.num_rows = m.num_cols = num_nodes;
    m.row_offsets.assign(num_nodes + 1, 0);
    m.col_indices.reserve(pairs.size());
    m.values.assign(pairs.size(), 1.0);
    for (const auto& [s, d] : pairs) {
        m.row_offsets[s + 1]++;
        m.col_indices.push_back(d);
    }
    for (int r = 0; r < num_nodes; ++r) m.row_offsets[r + 1] += m.row_offsets[r];
    return m;
}

SparseRowMatrix row_normalize(const SparseRowMatrix& a) {
    for (Real v : a.values)
        if (v < 0.0) throw std::invalid_argument("row_normalize: negative value in input");

    SparseRowMatrix out = a;
    for (int r = 0; r < a.num_rows; ++r) {
        Real sum = 0.0;
        for (auto i = a.row_begin(r); i < a.row_end(r); ++i) sum += a.values[i];
        if (sum > 0.0)
            for (auto i = a.row_begin(r); i < a.row_end(r); ++i) out.values[i] = a.values[i] / sum;
    }
    return out;
}

BatchedGraph block_diagonal_batch(const std::vector<Graph>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("block_diagonal_batch: empty graph list");
    const int d = graphs.front().feature_dim;
    const int d_edge = graphs.front().edge_feature_dim;
    for (const auto& g : graphs) {
        if (g.feature_dim != d)
            throw std::invalid_argument("block_diagonal_batch: node feature dim mismatch (" +
                                        std::to_string(g.feature_dim) + " vs " + std::to_string(d) + ")");
        if (g.edge_feature_dim != d_edge)
            throw std::invalid_argument("block_diagonal_batch: edge feature dim mismatch");
    }

    BatchedGraph b;
    b.graphs = graphs;
    b.feature_dim = d;
    b.node_offsets.resize(graphs.size() + 1);
    b.node_offsets[0] = 0;
    for (size_t g = 0; g < graphs.size(); ++g)
        b.node_offsets[g + 1] = b.node_offsets[g] + graphs[g].num_nodes;
    b.total_nodes = b.node_offsets.back();

    b.node_features.reserve(static_cast<size_t>(b.total_nodes) * d);
    bool all_labeled = true;
    for (const auto& g : graphs) {
        b.node_features.insert(b.node_features.end(), g.node_features.begin(), g.node_features.end());
        all_labeled = all_labeled && static_cast<int>(g.labels.size()) == g.num_nodes;
    }
    if (all_labeled)
        for (const auto& g : graphs) b.labels.insert(b.labels.end(), g.labels.begin(), g.labels.end());
    return b;
}

SparseRowMatrix batch_adjacency(const BatchedGraph& batch) {
    SparseRowMatrix m;
    m.num_rows = m.num_cols = batch.total_nodes;
    m.row_offsets.assign(batch.total_nodes + 1, 0);
    for (int g = 0; g < batch.num_graphs(); ++g) {
        SparseRowMatrix a = build_csr(batch.graphs[g].edges, batch.graphs[g].num_nodes, true);
        const int off = batch.node_offsets[g];
        for (int r = 0; r < a.num_rows; ++r)
            m.row_offsets[off + r + 1] = m.row_offsets[off + r] + (a.row_end(r) - a.row_begin(r));
        for (int c : a.col_indices) m.col_indices.push_back(off + c);
        m.values.insert(m.values.end(), a.values.begin(), a.values.end());
    }
    return m;
}

}  // namespace gd
