#include "gd/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gd {

namespace {

using nlohmann::json;

json graph_to_json(const Graph& g) {
    json j;
    j["num_nodes"] = g.num_nodes;
    // Canonical undirected storage: each (s,d) with s < d once. Mirrors must
    // exist in memory; self-loops and one-directional edges are kept as-is.
    std::vector<std::array<int, 2>> canon;
    std::vector<size_t> feature_row;
    std::vector<std::array<int, 2>> sorted = g.edges;
    std::sort(sorted.begin(), sorted.end());
    auto has_edge = [&](int s, int d) {
        return std::binary_search(sorted.begin(), sorted.end(), std::array<int, 2>{s, d});
    };
    for (size_t e = 0; e < g.edges.size(); ++e) {
        const auto [s, d] = g.edges[e];
        if (s <= d || !has_edge(d, s)) {
            canon.push_back({s, d});
            feature_row.push_back(e);
        }
    }
    j["edges"] = json::array();
    for (const auto& [s, d] : canon) j["edges"].push_back({s, d});

    j["node_features"] = json::array();
    for (int i = 0; i < g.num_nodes; ++i) {
        json row = json::array();
        for (int f = 0; f < g.feature_dim; ++f) row.push_back(g.feature(i, f));
        j["node_features"].push_back(std::move(row));
    }
    if (g.edge_feature_dim > 0) {
        json ef = json::array();
        for (size_t e : feature_row) {
            json row = json::array();
            for (int f = 0; f < g.edge_feature_dim; ++f)
                row.push_back(g.edge_features[e * g.edge_feature_dim + f]);
            ef.push_back(std::move(row));
        }
        j["edge_features"] = std::move(ef);
    }
    if (!g.labels.empty()) j["labels"] = g.labels;
    if (!g.attrs.empty()) j["attrs"] = g.attrs;
    return j;
}

Graph graph_from_json(const json& j) {
    Graph g;
    g.num_nodes = j.at("num_nodes").get<int>();
    const auto& nf = j.at("node_features");
    if (static_cast<int>(nf.size()) != g.num_nodes)
        throw std::runtime_error("dataset: node_features rows != num_nodes");
    g.feature_dim = nf.empty() ? 0 : static_cast<int>(nf[0].size());
    g.node_features.reserve(static_cast<size_t>(g.num_nodes) * g.feature_dim);
    for (const auto& row : nf) {
        if (static_cast<int>(row.size()) != g.feature_dim)
            throw std::runtime_error("dataset: ragged node_features");
        for (const auto& v : row) g.node_features.push_back(v.get<Real>());
    }

    const bool has_ef = j.contains("edge_features");
    if (has_ef) {
        const auto& ef = j.at("edge_features");
        if (ef.size() != j.at("edges").size())
            throw std::runtime_error("dataset: edge_features rows != edges");
        g.edge_feature_dim = ef.empty() ? 0 : static_cast<int>(ef[0].size());
    }
    for (size_t e = 0; e < j.at("edges").size(); ++e) {
        const auto& pair = j.at("edges")[e];
        const int s = pair.at(0).get<int>(), d = pair.at(1).get<int>();
        g.edges.push_back({s, d});
        if (s != d) g.edges.push_back({d, s});  // loader mirrors
        if (has_ef) {
            const auto& row = j.at("edge_features")[e];
            for (const auto& v : row) g.edge_features.push_back(v.get<Real>());
            if (s != d)
                for (const auto& v : row) g.edge_features.push_back(v.get<Real>());
        }
    }
    if (j.contains("labels")) g.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("attrs"))
        g.attrs = j.at("attrs").get<std::map<std::string, std::string>>();
    return g;
}

}  // namespace

void write_graphs_jsonl(std::ostream& out, const std::vector<Graph>& graphs) {
    for (const auto& g : graphs) out << graph_to_json(g).dump() << "\n";
}

void write_graphs_jsonl(const std::string& path, const std::vector<Graph>& graphs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    write_graphs_jsonl(f, graphs);
    if (!f) throw std::runtime_error("dataset: write failed for " + path);
}

std::vector<Graph> read_graphs_jsonl(std::istream& in) {
    std::vector<Graph> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(graph_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Graph> read_graphs_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + path);
    return read_graphs_jsonl(f);
}

void write_dataset(const std::string& dir, const GridDataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto to_graphs = [](const std::vector<GridSample>& samples) {
        std::vector<Graph> gs;
        gs.reserve(samples.size());
        for (const auto& s : samples) gs.push_back(s.graph);
        return gs;
    };
    write_graphs_jsonl((fs::path(dir) / "train.jsonl").string(), to_graphs(dataset.train));
    write_graphs_jsonl((fs::path(dir) / "val.jsonl").string(), to_graphs(dataset.val));
    write_graphs_jsonl((fs::path(dir) / "test.jsonl").string(), to_graphs(dataset.test));

    json manifest;
    manifest["format_version"] = 1;
    manifest["task"] = "grid_histogram_counting";
    manifest["seed"] = dataset.spec.seed;
    manifest["num_graphs"] = dataset.spec.num_graphs;
    manifest["rows"] = dataset.spec.rows;
    manifest["col_choices"] = dataset.spec.col_choices;
    manifest["num_colors"] = dataset.spec.num_colors;
    manifest["split"] = {dataset.spec.train_fraction, dataset.spec.val_fraction,
                         dataset.spec.test_fraction};
    manifest["counts"] = {{"train", dataset.train.size()},
                          {"val", dataset.val.size()},
                          {"test", dataset.test.size()}};
    manifest["num_classes"] = dataset.spec.num_classes();
    manifest["rng"] = "xoshiro256++/splitmix64 (gd-rng-1)";
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

LoadedDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream mf(manifest_path, std::ios::binary);
    if (!mf) throw std::runtime_error("dataset: missing manifest " + manifest_path.string());
    json manifest = json::parse(mf);

    LoadedDataset ds;
    ds.train = read_graphs_jsonl((fs::path(dir) / "train.jsonl").string());
    ds.val = read_graphs_jsonl((fs::path(dir) / "val.jsonl").string());
    ds.test = read_graphs_jsonl((fs::path(dir) / "test.jsonl").string());
    ds.num_classes = manifest.at("num_classes").get<int>();
    ds.feature_dim = manifest.at("num_colors").get<int>();
    return ds;
}

}  // namespace gd
