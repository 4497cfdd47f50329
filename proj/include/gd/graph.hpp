#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gd {

using Real = double;

// One input graph. Node features are row-major [num_nodes x feature_dim].
// Undirected graphs keep both directions in `edges`; the JSONL format stores
// each undirected edge once and the loader mirrors (see dataset_io).
struct Graph {
    int num_nodes = 0;
    int feature_dim = 0;
    std::vector<std::array<int, 2>> edges;  // (src, dst), 0-based
    std::vector<Real> node_features;        // [num_nodes * feature_dim]
    int edge_feature_dim = 0;
    std::vector<Real> edge_features;        // [edges.size() * edge_feature_dim]
    std::vector<int> labels;                // optional, per node
    std::map<std::string, std::string> attrs;

    Real feature(int node, int f) const { return node_features[static_cast<size_t>(node) * feature_dim + f]; }
};

// Compressed-row sparse matrix. Within each row, column indices are strictly
// increasing and no explicit zeros are stored after construction.
struct SparseRowMatrix {
    int num_rows = 0;
    int num_cols = 0;
    std::vector<std::int64_t> row_offsets;  // length num_rows+1, nondecreasing
    std::vector<int> col_indices;
    std::vector<Real> values;

    std::int64_t nnz() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t row_begin(int r) const { return row_offsets[r]; }
    std::int64_t row_end(int r) const { return row_offsets[r + 1]; }
};

// Several graphs composed block-diagonally. Node i of member g becomes node
// node_offsets[g] + i; block_mask marks intra-graph pairs.
struct BatchedGraph {
    std::vector<Graph> graphs;
    std::vector<int> node_offsets;  // length graphs.size()+1, strictly increasing
    int total_nodes = 0;
    int feature_dim = 0;
    std::vector<Real> node_features;  // [total_nodes * feature_dim]
    std::vector<int> labels;          // concatenated per-node labels (may be empty)

    int num_graphs() const { return static_cast<int>(graphs.size()); }
    int graph_size(int g) const { return node_offsets[g + 1] - node_offsets[g]; }

    // [N x N] row-major, 1 iff nodes i and j belong to the same member graph.
    std::vector<std::uint8_t> block_mask() const;
};

// Binary adjacency from an edge list. With `symmetric` every edge is also
// stored mirrored; duplicates collapse to a single entry.
// Throws std::out_of_range naming the offending edge on a bad index.
SparseRowMatrix build_csr(const std::vector<std::array<int, 2>>& edge_list, int num_nodes,
                          bool symmetric);

// L1 row normalization: every row with a nonzero sum ends up summing to 1,
// all-zero rows stay all-zero, the sparsity pattern is unchanged.
// Throws std::invalid_argument on negative input values.
SparseRowMatrix row_normalize(const SparseRowMatrix& a);

// Row-wise concatenation of node features plus offset bookkeeping.
// All members must share feature_dim (throws std::invalid_argument).
BatchedGraph block_diagonal_batch(const std::vector<Graph>& graphs);

// Adjacency of the whole batch: per-member symmetric binary CSR embedded
// block-diagonally.
SparseRowMatrix batch_adjacency(const BatchedGraph& batch);

}  // namespace gd
