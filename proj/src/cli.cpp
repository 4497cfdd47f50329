#include "gd/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gd/checkpoint.hpp"
#include "gd/config.hpp"
#include "gd/dataset_io.hpp"
#include "gd/selftest.hpp"
#include "gd/train.hpp"

namespace gd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int parse_gd_threads() {
    const char* env = std::getenv("GD_THREADS");
    if (!env || !*env) return 1;
    try {
        size_t pos = 0;
        const int n = std::stoi(env, &pos);
        if (pos != std::strlen(env) || n < 1) throw std::invalid_argument(env);
        return n;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("GD_THREADS='") + env +
                                    "' is not a positive integer");
    }
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

struct GenArgs {
    int rows = 10;
    std::string cols = "10,11,12,13";
    int colors = 20;
    int n = 10000;
    std::uint64_t seed = 0;
    std::string split = "0.8,0.1,0.1";
    std::string out = "data";
};

int cmd_gen(const GenArgs& args) {
    parse_gd_threads();  // validated; generation itself is order-independent
    DatasetSpec spec;
    spec.rows = args.rows;
    spec.col_choices = parse_int_list(args.cols);
    spec.num_colors = args.colors;
    spec.num_graphs = args.n;
    spec.seed = args.seed;
    {
        std::vector<Real> fr;
        std::string cur;
        for (char c : args.split + ",") {
            if (c == ',') {
                if (!cur.empty()) fr.push_back(std::stod(cur));
                cur.clear();
            } else
                cur += c;
        }
        if (fr.size() != 3) throw std::invalid_argument("gen: --split wants three fractions");
        spec.train_fraction = fr[0];
        spec.val_fraction = fr[1];
        spec.test_fraction = fr[2];
    }
    spec.validate();
    GridDataset ds = make_dataset(spec);
    write_dataset(args.out, ds);
    std::printf("wrote %zu/%zu/%zu graphs to %s (classes 0..%d)\n", ds.train.size(),
                ds.val.size(), ds.test.size(), args.out.c_str(), spec.num_classes() - 1);
    return kOk;
}

struct TrainArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string data;
    std::string out = "runs";
    std::string seed;      // optional override of train.seed
    std::string baseline;  // optional override of train.baseline
};

Config effective_config(const TrainArgs& args) {
    Config config = args.config_path.empty() ? Config() : Config::from_file(args.config_path);
    for (const auto& kv : args.overrides) config.apply_override(kv);
    if (!args.data.empty()) config.set("data.path", args.data);
    if (!args.seed.empty()) config.set("train.seed", args.seed);
    if (!args.baseline.empty()) config.set("train.baseline", args.baseline);
    config.check_known(known_run_keys());
    return config;
}

void write_report_json(const std::string& path, const Config& config, const RunReport& report,
                       std::int64_t param_count) {
    json j;
    j["config"] = config.values();
    j["seed"] = report.seed;
    j["epochs_run"] = report.epochs_run;
    j["best_epoch"] = report.best_epoch;
    j["best_val_acc"] = report.best_val_acc;
    j["test_acc"] = report.test_acc;
    j["test_loss"] = report.test_loss;
    j["wall_time_sec"] = report.wall_time_sec;
    j["param_count"] = param_count;
    j["train_loss"] = report.train_loss;
    j["val_acc"] = report.val_acc;
    j["lr"] = report.lr;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("train: cannot write " + path);
    f << j.dump(2) << "\n";
}

int cmd_train(const TrainArgs& args) {
    Config config = effective_config(args);
    const std::string data_path = config.get_string("data.path", "");
    if (data_path.empty()) throw std::invalid_argument("train: no dataset (--data or data.path)");
    if (!fs::exists(fs::path(data_path) / "manifest.json"))
        throw std::invalid_argument("train: dataset not found at " + data_path);
    LoadedDataset ds = load_dataset(data_path);

    TrainConfig tc = train_config_from(config);
    if (tc.model.input_dim == 0) tc.model.input_dim = ds.feature_dim;
    if (tc.model.num_classes == 0) tc.model.num_classes = ds.num_classes;
    // Pin the resolved dims back into the echoed config.
    config.set("model.input_dim", std::to_string(tc.model.input_dim));
    config.set("model.num_classes", std::to_string(tc.model.num_classes));

    const fs::path run_dir =
        fs::path(args.out) / (config.hash_hex() + "-s" + std::to_string(tc.seed));
    fs::create_directories(run_dir);

    DataSplits splits = splits_from(ds);
    TrainResult result;
    try {
        result = train(tc, splits);
    } catch (const NanLossError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeFailure;
    }

    const DiffuserConfig effective_model = result.model.config;
    write_metrics_csv((run_dir / "metrics.csv").string(), result.report);
    write_report_json((run_dir / "report.json").string(), config, result.report,
                      trainable_param_count(effective_model));
    if (tc.epochs > 0) save_checkpoint((run_dir / "best.ckpt").string(), result.model.params);
    std::printf("run %s: test_acc %.4f (best val %.4f at epoch %d, %d epochs, %.1fs)\n",
                run_dir.string().c_str(), result.report.test_acc, result.report.best_val_acc,
                result.report.best_epoch, result.report.epochs_run, result.report.wall_time_sec);
    return kOk;
}

// Rebuilds the model a run directory trained, with its best checkpoint.
DiffuserModel model_from_run(const std::string& run_dir, Config& config_out) {
    const fs::path report_path = fs::path(run_dir) / "report.json";
    std::ifstream f(report_path, std::ios::binary);
    if (!f) throw std::invalid_argument("no report.json under " + run_dir);
    json j = json::parse(f);
    for (auto& [k, v] : j.at("config").get<std::map<std::string, std::string>>())
        config_out.set(k, v);
    TrainConfig tc = train_config_from(config_out);
    DiffuserConfig mc = tc.baseline_mode == BaselineMode::vanilla_transformer
                            ? vanilla_transformer_config(tc.model)
                            : tc.model;
    DiffuserModel model = build_model(mc, tc.seed);
    load_into((fs::path(run_dir) / "best.ckpt").string(), model.params);
    return model;
}

std::vector<Graph> pick_split(const LoadedDataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "val") return ds.val;
    if (split == "test") return ds.test;
    throw std::invalid_argument("unknown split '" + split + "'");
}

int cmd_eval(const std::string& run_dir, const std::string& data, const std::string& split) {
    Config config;
    DiffuserModel model = model_from_run(run_dir, config);
    LoadedDataset ds = load_dataset(data);
    EvalResult res = evaluate(model, pick_split(ds, split));
    std::printf("%s: accuracy %.6f, loss %.6f over %lld nodes\n", split.c_str(), res.accuracy,
                res.mean_loss, static_cast<long long>(res.nodes));
    return kOk;
}

struct DumpArgs {
    std::string run_dir;
    std::string data;
    std::string split = "test";
    int index = 0;
    std::string what = "attention";
    std::string out = "dump";
};

int cmd_dump(const DumpArgs& args) {
    Config config;
    DiffuserModel model = model_from_run(args.run_dir, config);
    LoadedDataset ds = load_dataset(args.data);
    const auto graphs = pick_split(ds, args.split);
    if (args.index < 0 || args.index >= static_cast<int>(graphs.size()))
        throw std::invalid_argument("dump: index " + std::to_string(args.index) +
                                    " outside split of size " + std::to_string(graphs.size()));
    BatchedGraph batch = block_diagonal_batch({graphs[args.index]});

    ForwardTrace trace;
    forward(model, batch, false, nullptr, &trace);
    fs::create_directories(args.out);
    char buf[256];

    if (args.what == "attention") {
        for (size_t l = 0; l < trace.attention.size(); ++l)
            for (size_t h = 0; h < trace.attention[l][0].size(); ++h) {
                std::snprintf(buf, sizeof(buf), "attention_l%zu_h%zu.csv", l, h);
                std::ofstream f(fs::path(args.out) / buf, std::ios::binary);
                f << "i,j,weight\n";
                const auto& att = trace.attention[l][0][h];
                const int n = batch.total_nodes;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, j,
                                      att[static_cast<size_t>(i) * n + j]);
                        f << buf;
                    }
            }
    } else if (args.what == "virtual_edges") {
        if (trace.raw_edges.empty())
            throw std::invalid_argument("dump: this model does not build virtual edges");
        std::ofstream f(fs::path(args.out) / "virtual_edges.csv", std::ios::binary);
        f << "i,j,channel,value\n";
        const auto& e = trace.raw_edges[0];
        const auto& v = e.e.value();
        for (int i = 0; i < e.n; ++i)
            for (int j = 0; j < e.n; ++j)
                for (int c = 0; c <= e.k; ++c) {
                    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g\n", i, j, c,
                                  v[(static_cast<size_t>(i) * e.n + j) * (e.k + 1) + c]);
                    f << buf;
                }
    } else if (args.what == "pe") {
        if (!trace.pe_out.defined())
            throw std::invalid_argument("dump: self-edge encoding disabled in this model");
        std::ofstream f(fs::path(args.out) / "pe.csv", std::ios::binary);
        f << "node,dim,value\n";
        const int d = trace.pe_out.dim(1);
        for (int i = 0; i < trace.pe_out.dim(0); ++i)
            for (int c = 0; c < d; ++c) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, c,
                              trace.pe_out.value()[static_cast<size_t>(i) * d + c]);
                f << buf;
            }
    } else {
        throw std::invalid_argument("dump: --what must be attention, virtual_edges or pe");
    }
    std::printf("dumped %s for graph %d to %s\n", args.what.c_str(), args.index,
                args.out.c_str());
    return kOk;
}

int cmd_selftest(bool corrupt_backward) {
    SelftestOptions opt;
    opt.corrupt_backward = corrupt_backward;
    const auto results = run_selftest(opt);
    for (const auto& r : results)
        std::printf("[%s] %-28s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
    return all_passed(results) ? kOk : kSelftestFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Graph Diffuser: virtual-edge graph transformer and the grid histogram benchmark"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate a grid histogram dataset");
    gen_cmd->add_option("--rows", gen.rows, "grid rows");
    gen_cmd->add_option("--cols", gen.cols, "comma-separated column choices");
    gen_cmd->add_option("--colors", gen.colors, "number of colors");
    gen_cmd->add_option("--n", gen.n, "number of graphs");
    gen_cmd->add_option("--seed", gen.seed, "dataset seed");
    gen_cmd->add_option("--split", gen.split, "train,val,test fractions");
    gen_cmd->add_option("--out", gen.out, "output directory");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model and write run artifacts");
    train_cmd->add_option("--config", train_args.config_path, "key=value config file");
    train_cmd->add_option("--set", train_args.overrides, "config override key=value")
        ->take_all();
    train_cmd->add_option("--data", train_args.data, "dataset directory");
    train_cmd->add_option("--out", train_args.out, "runs directory");
    train_cmd->add_option("--seed", train_args.seed, "training seed override");
    train_cmd->add_option("--baseline", train_args.baseline,
                          "model variant: diffuser or vanilla (transformer)");

    std::string eval_run, eval_data, eval_split = "test";
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a run's best checkpoint");
    eval_cmd->add_option("--run", eval_run, "run directory")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--split", eval_split, "train|val|test");

    DumpArgs dump;
    auto* dump_cmd = app.add_subcommand("dump", "export attention/virtual-edge/PE CSVs");
    dump_cmd->add_option("--run", dump.run_dir, "run directory")->required();
    dump_cmd->add_option("--data", dump.data, "dataset directory")->required();
    dump_cmd->add_option("--split", dump.split, "train|val|test");
    dump_cmd->add_option("--index", dump.index, "graph index within the split");
    dump_cmd->add_option("--what", dump.what, "attention|virtual_edges|pe");
    dump_cmd->add_option("--out", dump.out, "output directory");

    bool corrupt = false;
    auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in verification suite");
    selftest_cmd->add_flag("--corrupt-backward", corrupt,
                           "fault-injection fixture: corrupt one gradient");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsageError;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen(gen);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_run, eval_data, eval_split);
        if (dump_cmd->parsed()) return cmd_dump(dump);
        if (selftest_cmd->parsed()) return cmd_selftest(corrupt);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsageError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeFailure;
    }
    return kUsageError;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace gd::cli
