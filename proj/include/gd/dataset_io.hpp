#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gd/graph.hpp"
#include "gd/grid_task.hpp"

namespace gd {

// JSONL graph format, one graph per line:
//   {"num_nodes": int, "edges": [[src,dst], ...], "node_features": [[...], ...],
//    "edge_features": [[...], ...]?, "labels": [int, ...]?, "attrs": {str: str}?}
// Undirected graphs store each edge once with src < dst; the loader mirrors
// every edge into both directions.

void write_graphs_jsonl(std::ostream& out, const std::vector<Graph>& graphs);
void write_graphs_jsonl(const std::string& path, const std::vector<Graph>& graphs);
std::vector<Graph> read_graphs_jsonl(std::istream& in);
std::vector<Graph> read_graphs_jsonl(const std::string& path);

// Dataset directory layout: train.jsonl / val.jsonl / test.jsonl plus
// manifest.json (spec echo, seed, per-split counts, format version).
void write_dataset(const std::string& dir, const GridDataset& dataset);

struct LoadedDataset {
    std::vector<Graph> train, val, test;
    int num_classes = 0;
    int feature_dim = 0;
};

LoadedDataset load_dataset(const std::string& dir);

}  // namespace gd
