// Acceptance suite: every criterion prints one PASS/FAIL line with the
// measured quantity and its bound. Run all, or a single one with --only N.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gd/checkpoint.hpp"
#include "gd/cli.hpp"
#include "gd/gradcheck.hpp"
#include "gd/model.hpp"
#include "gd/ops.hpp"
#include "gd/selftest.hpp"
#include "gd/train.hpp"

using namespace gd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

double elapsed(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// 1. Every stack_powers slice matches brute-force walk enumeration on an
//    exhaustive family of small connected graphs.
Outcome criterion_walk_oracle() {
    const auto start = Clock::now();
    auto graphs = random_connected_graphs(220, 6, 1, 2024);
    Real max_err = 0.0;
    const int k = 4;
    for (const auto& g : graphs) {
        std::vector<std::vector<int>> nbrs(g.num_nodes);
        for (const auto& [s, d] : g.edges) nbrs[s].push_back(d);
        VirtualEdges ve = stack_powers(row_normalize(build_csr(g.edges, g.num_nodes, true)), k);
        for (int i = 0; i < g.num_nodes; ++i)
            for (int t = 0; t <= k; ++t) {
                const auto oracle = brute_force_walk_distribution(nbrs, i, t);
                for (int j = 0; j < g.num_nodes; ++j) {
                    const Real got =
                        ve.e.value()[(static_cast<size_t>(i) * g.num_nodes + j) * (k + 1) + t];
                    max_err = std::max(max_err, std::fabs(got - oracle[j]));
                }
            }
    }
    const double secs = elapsed(start);
    return {max_err < 1e-10 && secs < 10.0,
            fmt("%zu graphs, max abs err %.3g (bound 1e-10), %.1fs (bound 10s)", graphs.size(),
                max_err, secs)};
}

// 2. Full-model analytic gradients vs central differences for every
//    parameter tensor of the tiny configuration.
Outcome criterion_full_gradcheck() {
    const auto start = Clock::now();
    Real worst = 0.0;
    for (bool learned_adjacency : {false, true}) {
        DiffuserConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_dim = 8;
        cfg.num_layers = 2;
        cfg.heads = 2;
        cfg.k = 3;
        cfg.num_classes = 3;
        cfg.use_weighted_adjacency = learned_adjacency;
        DiffuserModel model = build_model(cfg, 11);
        auto pool = random_connected_graphs(30, 5, 3, 5);
        Graph five;
        for (const auto& g : pool)
            if (g.num_nodes == 5) {
                five = g;
                break;
            }
        BatchedGraph batch = block_diagonal_batch({five});
        std::vector<int> labels;
        for (int i = 0; i < batch.total_nodes; ++i) labels.push_back(i % 3);
        auto f = [&]() { return cross_entropy(forward(model, batch, false), labels); };
        worst = std::max(worst, grad_check(f, model.params, 1e-5));
    }
    const double secs = elapsed(start);
    return {worst < 1e-4 && secs < 60.0,
            fmt("max rel err %.3g (bound 1e-4), %.1fs (bound 60s)", worst, secs)};
}

// 3. With w_p == 0 and the positional encoding zeroed, the diffuser forward
//    equals the vanilla transformer baseline.
Outcome criterion_reduction() {
    DiffuserConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 16;
    cfg.num_layers = 2;
    cfg.heads = 4;
    cfg.k = 4;
    cfg.num_classes = 5;
    DiffuserModel gd_model = build_model(cfg, 3);
    for (auto& [name, t] : gd_model.params.entries())
        if (name == "pe.w_pe" || name.find(".attn.w_p") != std::string::npos)
            std::fill(t.mutable_value().begin(), t.mutable_value().end(), 0.0);
    DiffuserModel vanilla = build_model(vanilla_transformer_config(cfg, false), 3);
    for (auto& [name, t] : vanilla.params.entries())
        t.mutable_value() = gd_model.params.at(name).value();

    auto graphs = random_connected_graphs(50, 6, 4, 31);
    Real max_err = 0.0;
    for (const auto& g : graphs) {
        BatchedGraph batch = block_diagonal_batch({g});
        const auto a = forward(gd_model, batch, false).value();
        const auto b = forward(vanilla, batch, false).value();
        for (size_t i = 0; i < a.size(); ++i) max_err = std::max(max_err, std::fabs(a[i] - b[i]));
    }
    return {max_err < 1e-10, fmt("50 graphs, max abs diff %.3g (bound 1e-10)", max_err)};
}

// 4. Invariant suite, >= 100 random cases per property.
Outcome criterion_invariants() {
    std::string detail;
    bool ok = true;

    {  // attention row sums and zero cross-graph mass, via the masked op
        DiffuserConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_dim = 8;
        cfg.heads = 2;
        cfg.k = 3;
        cfg.num_classes = 2;
        DiffuserModel model = build_model(cfg, 4);
        Rng rng(41);
        Real worst_sum = 0.0;
        bool cross_zero = true;
        for (int rep = 0; rep < 100; ++rep) {
            auto graphs = random_connected_graphs(2, 5, 3, 1000 + rep);
            BatchedGraph batch = block_diagonal_batch(graphs);
            const int n = batch.total_nodes;
            VirtualEdges ve;
            ve.n = n;
            ve.k = 3;
            ve.mixed = true;
            std::vector<Real> ev(static_cast<size_t>(n) * n * 4);
            for (auto& v : ev) v = rng.uniform(-1.0, 1.0);
            ve.e = Tensor::from_data({n, n, 4}, std::move(ev));
            std::vector<Real> xv(static_cast<size_t>(n) * 8);
            for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
            Tensor x = Tensor::from_data({n, 8}, std::move(xv));
            const auto mask = batch.block_mask();
            AttentionRecord record;
            fused_attention(x, &ve, model.layers[0].attn, &mask, false, nullptr, &record);
            for (const auto& att : record)
                for (int i = 0; i < n; ++i) {
                    Real sum = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const Real v = att[static_cast<size_t>(i) * n + j];
                        if (!mask[static_cast<size_t>(i) * n + j] && v != 0.0) cross_zero = false;
                        if (v < 0.0) cross_zero = false;
                        sum += v;
                    }
                    worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
                }
        }
        ok = ok && worst_sum < 1e-8 && cross_zero;
        detail += fmt("row-sum err %.3g (1e-8), cross-graph %s; ", worst_sum,
                      cross_zero ? "exact 0" : "NONZERO");
    }

    {  // permutation equivariance of the full forward
        DiffuserConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_dim = 8;
        cfg.num_layers = 2;
        cfg.heads = 2;
        cfg.k = 3;
        cfg.num_classes = 3;
        DiffuserModel model = build_model(cfg, 5);
        Rng rng(59);
        auto graphs = random_connected_graphs(100, 6, 3, 77);
        Real worst = 0.0;
        for (const auto& g : graphs) {
            std::vector<int> perm(g.num_nodes);
            for (int i = 0; i < g.num_nodes; ++i) perm[i] = i;
            for (int i = g.num_nodes; i > 1; --i)
                std::swap(perm[i - 1], perm[rng.next_below(i)]);
            Graph pg;
            pg.num_nodes = g.num_nodes;
            pg.feature_dim = g.feature_dim;
            pg.node_features.resize(g.node_features.size());
            for (int i = 0; i < g.num_nodes; ++i)
                for (int f = 0; f < g.feature_dim; ++f)
                    pg.node_features[static_cast<size_t>(perm[i]) * g.feature_dim + f] =
                        g.feature(i, f);
            for (const auto& [s, d] : g.edges) pg.edges.push_back({perm[s], perm[d]});
            const auto a = forward(model, block_diagonal_batch({g}), false).value();
            const auto b = forward(model, block_diagonal_batch({pg}), false).value();
            for (int i = 0; i < g.num_nodes; ++i)
                for (int c = 0; c < 3; ++c)
                    worst = std::max(worst, std::fabs(a[static_cast<size_t>(i) * 3 + c] -
                                                      b[static_cast<size_t>(perm[i]) * 3 + c]));
        }
        ok = ok && worst < 1e-9;
        detail += fmt("perm equivariance %.3g (1e-9); ", worst);
    }

    {  // raw-E row stochasticity
        auto graphs = random_connected_graphs(100, 6, 1, 91);
        Real worst = 0.0;
        for (const auto& g : graphs) {
            VirtualEdges ve =
                stack_powers(row_normalize(build_csr(g.edges, g.num_nodes, true)), 4);
            for (int i = 0; i < g.num_nodes; ++i)
                for (int t = 0; t <= 4; ++t) {
                    Real sum = 0.0;
                    for (int j = 0; j < g.num_nodes; ++j)
                        sum += ve.e.value()[(static_cast<size_t>(i) * g.num_nodes + j) * 5 + t];
                    worst = std::max(worst, std::fabs(sum - 1.0));
                }
        }
        ok = ok && worst < 1e-10;
        detail += fmt("raw-E row sums %.3g (1e-10); ", worst);
    }

    {  // zero-parameter weighted adjacency equals plain row normalization
        DiffuserConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_dim = 8;
        cfg.heads = 2;
        cfg.k = 3;
        cfg.num_classes = 2;
        cfg.use_weighted_adjacency = true;
        DiffuserModel model = build_model(cfg, 6);
        for (const char* name : {"wadj.w1", "wadj.b1", "wadj.w2", "wadj.b2"}) {
            auto& v = model.params.at(name).mutable_value();
            std::fill(v.begin(), v.end(), 0.0);
        }
        auto graphs = random_connected_graphs(100, 6, 3, 13);
        Real worst = 0.0;
        for (const auto& g : graphs) {
            auto pattern =
                std::make_shared<SparseRowMatrix>(build_csr(g.edges, g.num_nodes, true));
            Tensor x = Tensor::from_data({g.num_nodes, 3}, g.node_features);
            LearnedAdjacency learned = weighted_adjacency(x, nullptr, pattern, model.wadj, false);
            VirtualEdges via_learned = stack_powers(learned, 3);
            VirtualEdges via_plain = stack_powers(row_normalize(*pattern), 3);
            for (std::int64_t i = 0; i < via_learned.e.numel(); ++i)
                worst = std::max(worst, std::fabs(via_learned.e.value()[i] -
                                                  via_plain.e.value()[i]));
        }
        ok = ok && worst < 1e-12;
        detail += fmt("zero-wadj vs row-normalize %.3g (1e-12)", worst);
    }
    return {ok, detail};
}

DatasetSpec grid_spec(int num_graphs, int rows, int cols, int colors) {
    DatasetSpec spec;
    spec.num_graphs = num_graphs;
    spec.rows = rows;
    spec.col_choices = {cols};
    spec.num_colors = colors;
    spec.seed = 7;
    return spec;
}

TrainConfig grid_train_config(const DatasetSpec& spec) {
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 8;
    tc.base_lr = 4e-4;
    tc.warmup_epochs = 5;
    tc.weight_decay = 1e-5;
    tc.seed = 1;
    tc.early_stop_patience = 50;
    tc.model.input_dim = spec.num_colors;
    tc.model.hidden_dim = 32;
    tc.model.num_layers = 3;
    tc.model.heads = 4;
    tc.model.k = 16;
    tc.model.dropout = 0.0;
    tc.model.attention_dropout = 0.0;
    tc.model.num_classes = spec.num_classes();
    return tc;
}

// 5. Scaled grid contrast: the diffuser solves the task, the matched-budget
//    vanilla transformer trails by a wide margin.
Outcome criterion_grid_contrast() {
    const auto start = Clock::now();
    const DatasetSpec spec = grid_spec(2000, 6, 6, 8);
    DataSplits data = splits_from(make_dataset(spec));
    TrainConfig tc = grid_train_config(spec);

    TrainResult gd_run = train(tc, data);
    std::printf("  [grid] diffuser: test acc %.4f (%d epochs, %.0fs)\n", gd_run.report.test_acc,
                gd_run.report.epochs_run, gd_run.report.wall_time_sec);

    tc.baseline_mode = BaselineMode::vanilla_transformer;
    TrainResult base_run = train(tc, data);
    std::printf("  [grid] vanilla:  test acc %.4f (%d epochs, %.0fs)\n", base_run.report.test_acc,
                base_run.report.epochs_run, base_run.report.wall_time_sec);

    const Real gd_acc = gd_run.report.test_acc;
    const Real base_acc = base_run.report.test_acc;
    const double secs = elapsed(start);
    const bool ok = gd_acc >= 0.90 && gd_acc - base_acc >= 0.20;
    return {ok, fmt("diffuser %.4f (bound >= 0.90), vanilla %.4f, gap %.4f (bound >= 0.20), %.0fs",
                    gd_acc, base_acc, gd_acc - base_acc, secs)};
}

// 6. The vanilla baseline solves the 1-D sequence version of the task.
Outcome criterion_sequence_sanity() {
    const auto start = Clock::now();
    const DatasetSpec spec = grid_spec(2000, 1, 12, 8);
    DataSplits data = splits_from(make_dataset(spec));
    TrainConfig tc = grid_train_config(spec);
    tc.baseline_mode = BaselineMode::vanilla_transformer;
    TrainResult run = train(tc, data);
    const double secs = elapsed(start);
    return {run.report.test_acc >= 0.95 && secs < 600.0,
            fmt("vanilla on 1x12 sequences: test acc %.4f (bound >= 0.95), %.0fs (bound 600s)",
                run.report.test_acc, secs)};
}

// 7. cmd_train twice with identical config and seed produces byte-identical
//    metrics.csv.
Outcome criterion_determinism() {
    const fs::path base = fs::temp_directory_path() / "gd_acceptance_determinism";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string data = (base / "data").string();
    if (cli::run({"gen", "--rows", "4", "--cols", "4", "--colors", "4", "--n", "60", "--seed",
                  "3", "--out", data}) != cli::kOk)
        return {false, "dataset generation failed"};

    auto train_to = [&](const std::string& out) {
        return cli::run({"train", "--data", data, "--out", out, "--seed", "5", "--set",
                         "train.epochs=4", "--set", "train.warmup_epochs=1", "--set", "model.k=4", "--set", "model.hidden_dim=16",
                         "--set", "model.num_layers=2", "--set", "model.dropout=0.1", "--set",
                         "train.batch_size=8"});
    };
    if (train_to((base / "r1").string()) != cli::kOk) return {false, "first training run failed"};
    if (train_to((base / "r2").string()) != cli::kOk) return {false, "second training run failed"};

    auto read_metrics = [](const fs::path& runs) -> std::string {
        for (const auto& entry : fs::directory_iterator(runs)) {
            std::ifstream f(entry.path() / "metrics.csv", std::ios::binary);
            std::ostringstream ss;
            ss << f.rdbuf();
            return ss.str();
        }
        return "";
    };
    const std::string m1 = read_metrics(base / "r1");
    const std::string m2 = read_metrics(base / "r2");
    const bool ok = !m1.empty() && m1 == m2;
    return {ok, fmt("metrics.csv of %zu bytes %s", m1.size(),
                    ok ? "byte-identical across runs" : "DIFFER between runs")};
}

// 8. Checkpoint round trip reproduces evaluation bit-for-bit and the archive
//    bytes obey the documented layout.
Outcome criterion_checkpoint_roundtrip() {
    DatasetSpec spec = grid_spec(60, 4, 4, 4);
    DataSplits data = splits_from(make_dataset(spec));
    TrainConfig tc = grid_train_config(spec);
    tc.epochs = 3;
    tc.warmup_epochs = 1;
    tc.batch_size = 8;
    tc.model.k = 4;
    tc.model.hidden_dim = 16;
    TrainResult run = train(tc, data);

    const EvalResult before = evaluate(run.model, data.test);
    const fs::path path = fs::temp_directory_path() / "gd_acceptance_ckpt.bin";
    save_checkpoint(path.string(), run.model.params);

    DiffuserModel fresh = build_model(run.model.config, 999);
    load_into(path.string(), fresh.params);
    const EvalResult after = evaluate(fresh, data.test);

    // independent layout parse: magic, count line, then name/shape/payload
    std::ifstream f(path, std::ios::binary);
    std::string magic(8, '\0');
    f.read(magic.data(), 8);
    bool layout_ok = magic == "GDCKPT1\n";
    std::string line;
    std::getline(f, line);
    size_t entries = layout_ok ? std::stoul(line) : 0;
    layout_ok = layout_ok && entries == run.model.params.entries().size();
    for (size_t e = 0; layout_ok && e < entries; ++e) {
        std::string name, shape_line;
        if (!std::getline(f, name) || !std::getline(f, shape_line)) {
            layout_ok = false;
            break;
        }
        std::int64_t numel = 1;
        std::istringstream ss(shape_line);
        int d;
        while (ss >> d) numel *= d;
        if (name != run.model.params.entries()[e].first) layout_ok = false;
        f.seekg(numel * static_cast<std::int64_t>(sizeof(Real)), std::ios::cur);
    }
    char extra;
    layout_ok = layout_ok && !f.read(&extra, 1);  // exactly consumed

    const bool bits_ok =
        std::memcmp(&before.accuracy, &after.accuracy, sizeof(Real)) == 0 &&
        std::memcmp(&before.mean_loss, &after.mean_loss, sizeof(Real)) == 0;
    return {bits_ok && layout_ok,
            fmt("accuracy %.6f reproduced %s, layout %s", before.accuracy,
                bits_ok ? "bit-exact" : "WITH DIFFERENCES", layout_ok ? "conforms" : "MALFORMED")};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"walk-probability oracle", criterion_walk_oracle},
        {"full-model gradient check", criterion_full_gradcheck},
        {"reduction to vanilla attention", criterion_reduction},
        {"invariant suite", criterion_invariants},
        {"grid histogram contrast", criterion_grid_contrast},
        {"sequence sanity", criterion_sequence_sanity},
        {"training determinism", criterion_determinism},
        {"checkpoint round trip", criterion_checkpoint_roundtrip},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && only != static_cast<int>(i + 1)) continue;
        Outcome outcome{false, "unhandled exception"};
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %zu (%s): %s\n", outcome.passed ? "PASS" : "FAIL", i + 1,
                    criteria[i].first.c_str(), outcome.detail.c_str());
        std::fflush(stdout);
        failures += outcome.passed ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
