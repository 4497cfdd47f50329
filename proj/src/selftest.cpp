#include "gd/selftest.hpp"

#include <cmath>
#include <sstream>

#include "gd/checkpoint.hpp"
#include "gd/gradcheck.hpp"
#include "gd/model.hpp"
#include "gd/ops.hpp"
#include "gd/train.hpp"
#include "gd/virtual_edges.hpp"

namespace gd {

std::vector<Real> brute_force_walk_distribution(const std::vector<std::vector<int>>& neighbors,
                                                int start, int steps) {
    const int n = static_cast<int>(neighbors.size());
    std::vector<Real> dist(n, 0.0);
    // (node, remaining steps, accumulated probability)
    std::vector<std::tuple<int, int, Real>> stack = {{start, steps, 1.0}};
    while (!stack.empty()) {
        auto [v, t, p] = stack.back();
        stack.pop_back();
        if (t == 0) {
            dist[v] += p;
            continue;
        }
        if (neighbors[v].empty()) continue;  // walk dies at an isolated node
        const Real step_p = p / static_cast<Real>(neighbors[v].size());
        for (int nb : neighbors[v]) stack.emplace_back(nb, t - 1, step_p);
    }
    return dist;
}

std::vector<Graph> random_connected_graphs(int count, int max_nodes, int feature_dim,
                                           std::uint64_t seed) {
    std::vector<Graph> out;
    Rng rng(seed);
    const Real edge_probs[] = {0.3, 0.5, 0.8};
    while (static_cast<int>(out.size()) < count) {
        const int n = 2 + static_cast<int>(rng.next_below(max_nodes - 1));
        const Real p = edge_probs[rng.next_below(3)];
        std::vector<std::vector<int>> adj(n);
        Graph g;
        g.num_nodes = n;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.next_double() < p) {
                    adj[i].push_back(j);
                    adj[j].push_back(i);
                    g.edges.push_back({i, j});
                    g.edges.push_back({j, i});
                }
        // connectivity via DFS
        std::vector<bool> seen(n, false);
        std::vector<int> stack = {0};
        seen[0] = true;
        int reached = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int nb : adj[v])
                if (!seen[nb]) {
                    seen[nb] = true;
                    ++reached;
                    stack.push_back(nb);
                }
        }
        if (reached != n) continue;
        g.feature_dim = feature_dim;
        g.node_features.resize(static_cast<size_t>(n) * feature_dim);
        for (auto& v : g.node_features) v = rng.uniform(-1.0, 1.0);
        out.push_back(std::move(g));
    }
    return out;
}

namespace {

std::string err_detail(Real err, Real bound) {
    std::ostringstream os;
    os << "max err " << err << " (bound " << bound << ")";
    return os.str();
}

// Composite of the core ops, checked coordinate-by-coordinate against central
// differences; optionally corrupts one analytic gradient first.
CheckResult check_op_gradients(bool corrupt) {
    Rng rng(41);
    Tensor w1 = Tensor::from_data({4, 5}, [&] {
        std::vector<Real> v(20);
        for (auto& x : v) x = rng.uniform(-1, 1);
        return v;
    }(), true);
    Tensor w2 = Tensor::from_data({5, 3}, [&] {
        std::vector<Real> v(15);
        for (auto& x : v) x = rng.uniform(-1, 1);
        return v;
    }(), true);
    Tensor x = Tensor::from_data({6, 4}, [&] {
        std::vector<Real> v(24);
        for (auto& x_ : v) x_ = rng.uniform(-1, 1);
        return v;
    }());

    auto f = [&]() {
        Tensor h = relu(matmul(x, w1));
        Tensor y = sigmoid(matmul(h, w2));
        return sum_all(mul(y, y));
    };

    // First the analytic pass, then finite differences by hand so the
    // corruption fixture can interpose.
    w1.zero_grad();
    w2.zero_grad();
    backward(f());
    std::vector<Real> a1 = w1.grad(), a2 = w2.grad();
    if (corrupt) a1[3] += 0.25;

    const Real eps = 1e-6;
    Real max_err = 0.0;
    auto probe = [&](Tensor& w, const std::vector<Real>& analytic) {
        auto& val = w.mutable_value();
        for (size_t i = 0; i < val.size(); ++i) {
            const Real saved = val[i];
            val[i] = saved + eps;
            const Real up = f().item();
            val[i] = saved - eps;
            const Real down = f().item();
            val[i] = saved;
            const Real numeric = (up - down) / (2 * eps);
            const Real denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
            max_err = std::max(max_err, std::fabs(analytic[i] - numeric) / denom);
        }
    };
    probe(w1, a1);
    probe(w2, a2);
    return {"gradcheck-ops", max_err < 1e-6, err_detail(max_err, 1e-6)};
}

CheckResult check_layer_gradients() {
    DiffuserConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.num_layers = 1;
    cfg.heads = 2;
    cfg.k = 3;
    cfg.num_classes = 2;
    DiffuserModel model = build_model(cfg, 7);
    auto graphs = random_connected_graphs(1, 5, 3, 11);
    BatchedGraph batch = block_diagonal_batch({graphs[0]});

    auto f = [&]() {
        Tensor logits = forward(model, batch, false);
        return sum_all(mul(logits, logits));
    };
    const Real err = grad_check(f, model.params, 1e-5);
    return {"gradcheck-diffuser-layer", err < 1e-4, err_detail(err, 1e-4)};
}

CheckResult check_walk_oracle() {
    auto graphs = random_connected_graphs(30, 6, 1, 5);
    Real max_err = 0.0;
    for (const auto& g : graphs) {
        std::vector<std::vector<int>> nbrs(g.num_nodes);
        for (const auto& [s, d] : g.edges) nbrs[s].push_back(d);
        const int k = 4;
        VirtualEdges ve = stack_powers(row_normalize(build_csr(g.edges, g.num_nodes, true)), k);
        for (int i = 0; i < g.num_nodes; ++i)
            for (int t = 0; t <= k; ++t) {
                const auto dist = brute_force_walk_distribution(nbrs, i, t);
                for (int j = 0; j < g.num_nodes; ++j) {
                    const Real got =
                        ve.e.value()[(static_cast<size_t>(i) * g.num_nodes + j) * (k + 1) + t];
                    max_err = std::max(max_err, std::fabs(got - dist[j]));
                }
            }
    }
    return {"walk-oracle", max_err < 1e-10, err_detail(max_err, 1e-10)};
}

CheckResult check_softmax_equivalence() {
    Rng rng(19);
    Real max_err = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Real> logits(7 * 7);
        for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
        Tensor t = Tensor::from_data({7, 7}, logits);
        Tensor stabilized = l1_row_normalize(exp(sub_row_max(t)));
        Tensor plain = l1_row_normalize(exp(t));
        Tensor fused = gated_softmax(t, nullptr, nullptr);
        for (int i = 0; i < 49; ++i) {
            max_err = std::max(max_err, std::fabs(stabilized.value()[i] - plain.value()[i]));
            max_err = std::max(max_err, std::fabs(fused.value()[i] - plain.value()[i]));
        }
    }
    return {"softmax-equivalence", max_err < 1e-12, err_detail(max_err, 1e-12)};
}

CheckResult check_reduction_to_vanilla() {
    DiffuserConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 8;
    cfg.num_layers = 2;
    cfg.heads = 2;
    cfg.k = 3;
    cfg.num_classes = 3;
    DiffuserModel gd_model = build_model(cfg, 23);
    for (auto& [name, t] : gd_model.params.entries())
        if (name == "pe.w_pe" || name.find(".attn.w_p") != std::string::npos)
            std::fill(t.mutable_value().begin(), t.mutable_value().end(), 0.0);

    DiffuserModel vanilla = build_model(vanilla_transformer_config(cfg, false), 23);
    for (auto& [name, t] : vanilla.params.entries())
        t.mutable_value() = gd_model.params.at(name).value();

    auto graphs = random_connected_graphs(5, 6, 4, 29);
    Real max_err = 0.0;
    for (const auto& g : graphs) {
        BatchedGraph batch = block_diagonal_batch({g});
        const auto a = forward(gd_model, batch, false).value();
        const auto b = forward(vanilla, batch, false).value();
        for (size_t i = 0; i < a.size(); ++i) max_err = std::max(max_err, std::fabs(a[i] - b[i]));
    }
    return {"reduction-vanilla", max_err < 1e-10, err_detail(max_err, 1e-10)};
}

CheckResult check_weighted_adjacency_zero() {
    auto graphs = random_connected_graphs(5, 6, 3, 31);
    DiffuserConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.heads = 2;
    cfg.k = 3;
    cfg.num_classes = 2;
    cfg.use_weighted_adjacency = true;
    DiffuserModel model = build_model(cfg, 3);
    for (const char* name : {"wadj.w1", "wadj.b1", "wadj.w2", "wadj.b2"}) {
        auto& v = model.params.at(name).mutable_value();
        std::fill(v.begin(), v.end(), 0.0);
    }

    Real max_err = 0.0;
    for (const auto& g : graphs) {
        auto pattern = std::make_shared<SparseRowMatrix>(build_csr(g.edges, g.num_nodes, true));
        Tensor x = Tensor::from_data({g.num_nodes, g.feature_dim}, g.node_features);
        LearnedAdjacency learned = weighted_adjacency(x, nullptr, pattern, model.wadj, false);
        VirtualEdges via_learned = stack_powers(learned, cfg.k);
        VirtualEdges via_plain = stack_powers(row_normalize(*pattern), cfg.k);
        for (std::int64_t i = 0; i < via_learned.e.numel(); ++i)
            max_err = std::max(max_err,
                               std::fabs(via_learned.e.value()[i] - via_plain.e.value()[i]));
    }
    return {"weighted-adjacency-zero", max_err < 1e-12, err_detail(max_err, 1e-12)};
}

CheckResult check_checkpoint_roundtrip() {
    DiffuserConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.heads = 2;
    cfg.k = 2;
    cfg.num_classes = 2;
    DiffuserModel model = build_model(cfg, 77);
    std::ostringstream buf;
    save_checkpoint(buf, model.params);
    std::istringstream in(buf.str());
    ModelParams loaded = load_checkpoint(in);
    for (const auto& [name, t] : model.params.entries()) {
        const auto& other = loaded.at(name).value();
        if (other != t.value()) return {"checkpoint-roundtrip", false, "mismatch in " + name};
    }
    return {"checkpoint-roundtrip", true, "bitwise identical"};
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
    std::vector<CheckResult> results;
    results.push_back(check_op_gradients(options.corrupt_backward));
    results.push_back(check_layer_gradients());
    results.push_back(check_walk_oracle());
    results.push_back(check_softmax_equivalence());
    results.push_back(check_reduction_to_vanilla());
    results.push_back(check_weighted_adjacency_zero());
    results.push_back(check_checkpoint_roundtrip());
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace gd
