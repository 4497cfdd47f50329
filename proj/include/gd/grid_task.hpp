#pragma once

#include <cstdint>
#include <vector>

#include "gd/graph.hpp"
#include "gd/rng.hpp"

namespace gd {

// One grid histogram counting sample: per-node color ids, per-node counts of
// same-colored row/column mates, and the derived 4-neighbor grid graph with
// one-hot color node features. Nodes are row-major: id = r * cols + c.
struct GridSample {
    int rows = 0;
    int cols = 0;
    std::vector<int> colors;  // [rows * cols]
    std::vector<int> labels;  // [rows * cols]
    Graph graph;

    int color(int r, int c) const { return colors[static_cast<size_t>(r) * cols + c]; }
    int label(int r, int c) const { return labels[static_cast<size_t>(r) * cols + c]; }
};

struct DatasetSpec {
    int num_graphs = 0;
    int rows = 0;
    std::vector<int> col_choices;
    int num_colors = 0;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    int max_cols() const;
    // Count classes: labels range over {0, ..., (rows-1) + (max_cols-1)}.
    int num_classes() const { return rows + max_cols() - 1; }
    void validate() const;  // throws std::invalid_argument
};

struct GridDataset {
    DatasetSpec spec;
    std::vector<GridSample> train, val, test;
};

// label(r,c) = same-color nodes in row r plus same-color nodes in column c,
// excluding the node itself.
std::vector<int> count_labels(const std::vector<int>& colors, int rows, int cols);

// Uniform i.i.d. colors, labels from count_labels, 4-neighbor grid graph with
// one-hot features of width num_colors (both edge directions stored).
GridSample generate_grid(int rows, int cols, int num_colors, Rng& rng);

// Deterministic dataset: sample i uses derive_stream(seed, i) and column
// count col_choices[i-th draw], split by position after generation.
GridDataset make_dataset(const DatasetSpec& spec);

}  // namespace gd
