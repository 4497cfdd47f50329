#include "gd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gd/ops.hpp"

namespace gd {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
    if (epochs > 0 && warmup_epochs > epochs)
        throw std::invalid_argument("TrainConfig: warmup_epochs " + std::to_string(warmup_epochs) +
                                    " exceeds epochs " + std::to_string(epochs));
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (base_lr < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
}

DataSplits splits_from(const GridDataset& ds) {
    DataSplits s;
    auto take = [](const std::vector<GridSample>& samples) {
        std::vector<Graph> gs;
        gs.reserve(samples.size());
        for (const auto& g : samples) gs.push_back(g.graph);
        return gs;
    };
    s.train = take(ds.train);
    s.val = take(ds.val);
    s.test = take(ds.test);
    return s;
}

DataSplits splits_from(const LoadedDataset& ds) { return {ds.train, ds.val, ds.test}; }

namespace {

std::vector<int> shuffled_indices(size_t n, Rng& rng) {
    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    return idx;
}

Real grad_l2_norm(const ModelParams& params) {
    Real s = 0.0;
    for (const auto& [name, t] : params.trainable())
        if (t.has_grad())
            for (Real g : t.grad()) s += g * g;
    return std::sqrt(s);
}

std::vector<std::vector<Real>> snapshot_values(const ModelParams& params) {
    std::vector<std::vector<Real>> snap;
    snap.reserve(params.entries().size());
    for (const auto& [name, t] : params.entries()) snap.push_back(t.value());
    return snap;
}

void restore_values(ModelParams& params, const std::vector<std::vector<Real>>& snap) {
    for (size_t i = 0; i < snap.size(); ++i) params.entries()[i].second.mutable_value() = snap[i];
}

DiffuserModel build_for(const TrainConfig& config) {
    DiffuserConfig mc = config.baseline_mode == BaselineMode::vanilla_transformer
                            ? vanilla_transformer_config(config.model)
                            : config.model;
    return build_model(mc, config.seed);
}

}  // namespace

EvalResult evaluate_with(const std::function<Tensor(const BatchedGraph&)>& predict,
                         const std::vector<Graph>& samples, int batch_size) {
    EvalResult res;
    Real loss_sum = 0.0;
    std::int64_t correct = 0;
    for (size_t start = 0; start < samples.size(); start += batch_size) {
        const size_t end = std::min(samples.size(), start + batch_size);
        std::vector<Graph> chunk(samples.begin() + start, samples.begin() + end);
        BatchedGraph batch = block_diagonal_batch(chunk);
        if (static_cast<int>(batch.labels.size()) != batch.total_nodes)
            throw std::invalid_argument("evaluate: samples must carry per-node labels");
        Tensor logits = predict(batch);
        loss_sum += cross_entropy(logits, batch.labels).item() * batch.total_nodes;
        const int C = logits.dim(1);
        for (int i = 0; i < batch.total_nodes; ++i) {
            const Real* row = logits.value().data() + static_cast<size_t>(i) * C;
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (row[c] > row[best]) best = c;
            correct += best == batch.labels[i];
        }
        res.nodes += batch.total_nodes;
    }
    res.accuracy = res.nodes ? static_cast<Real>(correct) / static_cast<Real>(res.nodes) : 0.0;
    res.mean_loss = res.nodes ? loss_sum / static_cast<Real>(res.nodes) : 0.0;
    return res;
}

EvalResult evaluate(DiffuserModel& model, const std::vector<Graph>& samples, int batch_size) {
    return evaluate_with(
        [&model](const BatchedGraph& batch) { return forward(model, batch, false); }, samples,
        batch_size);
}

TrainResult train(const TrainConfig& config, const DataSplits& data) {
    config.validate();
    if (data.train.empty() || data.val.empty() || data.test.empty())
        throw std::invalid_argument("train: dataset splits must be nonempty");

    const auto t_start = std::chrono::steady_clock::now();
    DiffuserModel model = build_for(config);

    AdamHyper hyper;
    hyper.learning_rate = config.base_lr;
    hyper.weight_decay = config.weight_decay;
    OptimizerState opt = make_optimizer(model.params, hyper);

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(data.train.size()) + config.batch_size - 1) / config.batch_size;
    const std::int64_t total_steps = steps_per_epoch * config.epochs;
    const std::int64_t warmup_steps = steps_per_epoch * config.warmup_epochs;

    Rng shuffle_rng = derive_tagged(config.seed, "shuffle");
    Rng dropout_rng = derive_tagged(config.seed, "dropout");

    TrainResult result;
    RunReport& report = result.report;
    report.seed = config.seed;

    std::vector<std::vector<Real>> best_snapshot;
    Real last_val_acc = 0.0;
    Real last_lr = 0.0;
    std::int64_t global_step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<int> order = shuffled_indices(data.train.size(), shuffle_rng);
        Real loss_sum = 0.0;
        std::int64_t node_count = 0;
        for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<Graph> chunk;
            for (std::int64_t i = step * config.batch_size;
                 i < std::min<std::int64_t>(order.size(), (step + 1) * config.batch_size); ++i)
                chunk.push_back(data.train[order[i]]);
            BatchedGraph batch = block_diagonal_batch(chunk);
            if (static_cast<int>(batch.labels.size()) != batch.total_nodes)
                throw std::invalid_argument("train: training samples must carry per-node labels");

            model.params.zero_grad();
            Tensor logits = forward(model, batch, true, &dropout_rng);
            Tensor loss = cross_entropy(logits, batch.labels);
            const Real loss_v = loss.item();
            backward(loss);
            if (!std::isfinite(loss_v)) throw NanLossError(last_lr, grad_l2_norm(model.params));

            last_lr = lr_at(global_step, total_steps, warmup_steps, config.base_lr);
            adam_step(opt, model.params, last_lr);
            ++global_step;
            loss_sum += loss_v * batch.total_nodes;
            node_count += batch.total_nodes;
        }
        report.train_loss.push_back(loss_sum / static_cast<Real>(node_count));
        report.lr.push_back(last_lr);

        if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)
            last_val_acc = evaluate(model, data.val).accuracy;
        report.val_acc.push_back(last_val_acc);

        if (report.best_epoch < 0 || last_val_acc > report.best_val_acc) {
            report.best_val_acc = last_val_acc;
            report.best_epoch = epoch;
            best_snapshot = snapshot_values(model.params);
        }
        report.epochs_run = epoch + 1;
        if (config.early_stop_patience > 0 &&
            epoch - report.best_epoch >= config.early_stop_patience)
            break;
    }

    if (!best_snapshot.empty()) restore_values(model.params, best_snapshot);
    if (config.epochs > 0) {
        const EvalResult test = evaluate(model, data.test);
        report.test_acc = test.accuracy;
        report.test_loss = test.mean_loss;
    }
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.model = std::move(model);
    return result;
}

SeedSweep run_seeds(TrainConfig config, const DataSplits& data,
                    const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_seeds: need at least one seed");
    SeedSweep sweep;
    for (std::uint64_t s : seeds) {
        config.seed = s;
        sweep.test_accs.push_back(train(config, data).report.test_acc);
    }
    const size_t n = sweep.test_accs.size();
    for (Real a : sweep.test_accs) sweep.mean += a;
    sweep.mean /= static_cast<Real>(n);
    if (n > 1) {
        Real ss = 0.0;
        for (Real a : sweep.test_accs) ss += (a - sweep.mean) * (a - sweep.mean);
        sweep.stddev = std::sqrt(ss / static_cast<Real>(n - 1));
    }
    return sweep;
}

LrSearchResult lr_search(TrainConfig config, const DataSplits& data, std::vector<Real> rates) {
    if (rates.empty()) throw std::invalid_argument("lr_search: no candidate rates");
    LrSearchResult result;
    for (Real lr : rates) {
        config.base_lr = lr;
        RunReport report = train(config, data).report;
        if (result.runs.empty() || report.best_val_acc > result.best_val_acc) {
            result.best_lr = lr;
            result.best_val_acc = report.best_val_acc;
            result.test_acc_at_best = report.test_acc;
        }
        result.runs.emplace_back(lr, std::move(report));
    }
    return result;
}

std::int64_t trainable_param_count(const DiffuserConfig& config) {
    std::int64_t n = 0;
    for (const auto& e : diffuser_param_spec(config))
        if (e.role != ParamRole::bn_running_mean && e.role != ParamRole::bn_running_var)
            n += shape_numel(e.shape);
    return n;
}

DiffuserConfig vanilla_transformer_config(const DiffuserConfig& base, bool match_budget) {
    DiffuserConfig cfg = base;
    cfg.use_positional_attention = false;
    cfg.use_self_edge_encoding = false;
    cfg.use_edge_ffn = false;
    cfg.use_weighted_adjacency = false;
    if (!match_budget) return cfg;

    const std::int64_t target = trainable_param_count(base);
    const std::int64_t have = trainable_param_count(cfg);
    // Each extra FFN hidden unit costs 2d+1 weights plus its BN channel when
    // batch norm is active; spread the deficit over the layers.
    const std::int64_t per_unit = 2 * base.hidden_dim + 1;
    const std::int64_t deficit = target - have;
    if (deficit > 0) {
        const int extra = static_cast<int>(deficit / (per_unit * base.num_layers));
        const int base_hidden = cfg.ffn_hidden > 0 ? cfg.ffn_hidden : 2 * cfg.hidden_dim;
        cfg.ffn_hidden = base_hidden + extra;
    }
    return cfg;
}

void write_metrics_csv(const std::string& path, const RunReport& report) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    f << "epoch,train_loss,val_acc,lr\n";
    char buf[128];
    for (size_t e = 0; e < report.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, report.train_loss[e],
                      report.val_acc[e], report.lr[e]);
        f << buf;
    }
}

}  // namespace gd
