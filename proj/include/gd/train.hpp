#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gd/dataset_io.hpp"
#include "gd/grid_task.hpp"
#include "gd/model.hpp"
#include "gd/optim.hpp"

namespace gd {

enum class BaselineMode { diffuser, vanilla_transformer };

struct TrainConfig {
    int epochs = 200;
    int batch_size = 8;
    Real base_lr = 4e-4;  // middle of the searched {3e-4, 4e-4, 8e-4}
    int warmup_epochs = 5;
    Real weight_decay = 1e-5;
    std::uint64_t seed = 0;
    int eval_every = 1;
    int early_stop_patience = 50;  // <= 0 runs the fixed epoch budget
    DiffuserConfig model;
    BaselineMode baseline_mode = BaselineMode::diffuser;

    void validate() const;  // throws std::invalid_argument
};

struct RunReport {
    std::vector<Real> train_loss;  // per epoch actually run
    std::vector<Real> val_acc;
    std::vector<Real> lr;  // learning rate at the last step of the epoch
    Real test_acc = 0.0;
    Real test_loss = 0.0;
    int best_epoch = -1;
    Real best_val_acc = 0.0;
    double wall_time_sec = 0.0;
    std::uint64_t seed = 0;
    int epochs_run = 0;
};

struct DataSplits {
    std::vector<Graph> train, val, test;
};

DataSplits splits_from(const GridDataset& ds);
DataSplits splits_from(const LoadedDataset& ds);

// Thrown when the train loss turns non-finite; carries the diagnostics the
// abort message needs.
struct NanLossError : std::runtime_error {
    Real last_lr;
    Real grad_norm;
    NanLossError(Real lr, Real gnorm)
        : std::runtime_error("train: loss is not finite (last lr " + std::to_string(lr) +
                             ", grad norm " + std::to_string(gnorm) + ")"),
          last_lr(lr),
          grad_norm(gnorm) {}
};

struct TrainResult {
    RunReport report;
    DiffuserModel model;  // parameters restored to the best-validation epoch
};

// Seeded shuffle / block-diagonal batches / cross-entropy over nodes /
// Adam with warmup-cosine schedule; tracks the best validation accuracy and
// reports test accuracy at that checkpoint.
TrainResult train(const TrainConfig& config, const DataSplits& data);

struct EvalResult {
    Real accuracy = 0.0;
    Real mean_loss = 0.0;
    std::int64_t nodes = 0;
};

EvalResult evaluate(DiffuserModel& model, const std::vector<Graph>& samples, int batch_size = 64);
// Same metric over an arbitrary predictor (logits per batch).
EvalResult evaluate_with(const std::function<Tensor(const BatchedGraph&)>& predict,
                         const std::vector<Graph>& samples, int batch_size = 64);

struct SeedSweep {
    std::vector<Real> test_accs;
    Real mean = 0.0;
    Real stddev = 0.0;  // sample standard deviation (n-1); 0 for a single seed
};

SeedSweep run_seeds(TrainConfig config, const DataSplits& data,
                    const std::vector<std::uint64_t>& seeds);

struct LrSearchResult {
    Real best_lr = 0.0;
    Real best_val_acc = 0.0;
    Real test_acc_at_best = 0.0;
    std::vector<std::pair<Real, RunReport>> runs;  // one per candidate rate
};

// Trains once per candidate learning rate (default: the searched
// {3e-4, 4e-4, 8e-4}) and selects by best validation accuracy.
LrSearchResult lr_search(TrainConfig config, const DataSplits& data,
                         std::vector<Real> rates = {3e-4, 4e-4, 8e-4});

// Baseline architecture: positional attention, self-edge encoding and the
// edge FFN disabled. With match_budget the FFN is widened until the trainable
// parameter count is within 10% of the diffuser config's.
DiffuserConfig vanilla_transformer_config(const DiffuserConfig& base, bool match_budget = true);

std::int64_t trainable_param_count(const DiffuserConfig& config);

void write_metrics_csv(const std::string& path, const RunReport& report);

}  // namespace gd
