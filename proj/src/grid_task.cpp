#include "gd/grid_task.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gd {

int DatasetSpec::max_cols() const {
    if (col_choices.empty()) throw std::invalid_argument("DatasetSpec: no column choices");
    return *std::max_element(col_choices.begin(), col_choices.end());
}

void DatasetSpec::validate() const {
    if (num_graphs < 1) throw std::invalid_argument("DatasetSpec: num_graphs must be >= 1");
    if (rows < 1) throw std::invalid_argument("DatasetSpec: rows must be >= 1");
    if (col_choices.empty()) throw std::invalid_argument("DatasetSpec: col_choices empty");
    for (int c : col_choices)
        if (c < 1) throw std::invalid_argument("DatasetSpec: column count must be >= 1");
    if (num_colors < 2) throw std::invalid_argument("DatasetSpec: need at least 2 colors");
    const double total = train_fraction + val_fraction + test_fraction;
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("DatasetSpec: split fractions sum to " + std::to_string(total));
    if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0)
        throw std::invalid_argument("DatasetSpec: negative split fraction");
}

std::vector<int> count_labels(const std::vector<int>& colors, int rows, int cols) {
    if (static_cast<int>(colors.size()) != rows * cols)
        throw std::invalid_argument("count_labels: " + std::to_string(colors.size()) +
                                    " colors for a " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + " grid");
    std::vector<int> labels(colors.size(), 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int me = colors[static_cast<size_t>(r) * cols + c];
            int count = 0;
            for (int c2 = 0; c2 < cols; ++c2)
                if (c2 != c && colors[static_cast<size_t>(r) * cols + c2] == me) ++count;
            for (int r2 = 0; r2 < rows; ++r2)
                if (r2 != r && colors[static_cast<size_t>(r2) * cols + c] == me) ++count;
            labels[static_cast<size_t>(r) * cols + c] = count;
        }
    return labels;
}

GridSample generate_grid(int rows, int cols, int num_colors, Rng& rng) {
    if (rows < 1 || cols < 1 || num_colors < 1)
        throw std::invalid_argument("generate_grid: dimensions and colors must be >= 1");
    GridSample s;
    s.rows = rows;
    s.cols = cols;
    s.colors.resize(static_cast<size_t>(rows) * cols);
    for (auto& c : s.colors) c = static_cast<int>(rng.next_below(num_colors));
    s.labels = count_labels(s.colors, rows, cols);

    Graph& g = s.graph;
    g.num_nodes = rows * cols;
    g.feature_dim = num_colors;
    g.node_features.assign(static_cast<size_t>(g.num_nodes) * num_colors, 0.0);
    for (int i = 0; i < g.num_nodes; ++i)
        g.node_features[static_cast<size_t>(i) * num_colors + s.colors[i]] = 1.0;
    g.labels = s.labels;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int id = r * cols + c;
            if (c + 1 < cols) {
                g.edges.push_back({id, id + 1});
                g.edges.push_back({id + 1, id});
            }
            if (r + 1 < rows) {
                g.edges.push_back({id, id + cols});
                g.edges.push_back({id + cols, id});
            }
        }
    g.attrs["rows"] = std::to_string(rows);
    g.attrs["cols"] = std::to_string(cols);
    return s;
}

GridDataset make_dataset(const DatasetSpec& spec) {
    spec.validate();
    std::vector<GridSample> all;
    all.reserve(spec.num_graphs);
    for (int i = 0; i < spec.num_graphs; ++i) {
        Rng rng = derive_stream(spec.seed, static_cast<std::uint64_t>(i));
        const int cols = spec.col_choices[rng.next_below(spec.col_choices.size())];
        all.push_back(generate_grid(spec.rows, cols, spec.num_colors, rng));
    }
    const int n = spec.num_graphs;
    const int n_train = static_cast<int>(std::floor(spec.train_fraction * n));
    const int n_val = static_cast<int>(std::floor(spec.val_fraction * n));

    GridDataset ds;
    ds.spec = spec;
    ds.train.assign(all.begin(), all.begin() + n_train);
    ds.val.assign(all.begin() + n_train, all.begin() + n_train + n_val);
    ds.test.assign(all.begin() + n_train + n_val, all.end());
    return ds;
}

}  // namespace gd
