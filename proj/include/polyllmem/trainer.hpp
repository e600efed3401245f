// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Optimization and evaluation: AdamW, plateau scheduling, early stopping,
// five-fold cross-validated training, grid search, metrics, and the ridge
// regression baseline.

#ifndef POLYLLMEM_TRAINER_HPP
#define POLYLLMEM_TRAINER_HPP

#include "polyllmem/embed_store.hpp"
#include "polyllmem/model.hpp"
#include "polyllmem/ndmath.hpp"
#include "polyllmem/pipeline.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyllmem::train {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t hidden = 512;
    std::size_t rank = 8;
    double alpha = 16.0;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double dropout = 0.1;
    model::LossSpec loss{};
    std::size_t max_epochs = 500;
    std::size_t patience_early = 20;
    std::size_t patience_lr = 10;
    double lr_factor = 0.5;
    double min_lr = 1e-6;
    double min_delta = 1e-5;
    std::uint64_t seed = 42;
    bool use_lora = true;

    void validate() const;
    friend bool operator==(const TrainConfig& a, const TrainConfig& b) noexcept;
};

/// Full JSON object with every field, including defaults.
std::string config_to_json(const TrainConfig& config);
/// Fields absent from `text` keep their value in `base`; unknown keys throw.
TrainConfig config_from_json(std::string_view text, const TrainConfig& base = {});

model::ModelConfig model_config(const TrainConfig& config, std::size_t llm_dim, std::size_t uni_dim);

/// Grid ordering: (batch_size, hidden, rank, alpha, lr, weight_decay, dropout).
bool config_less(const TrainConfig& a, const TrainConfig& b) noexcept;

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

/// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
/// State is sized lazily on the first step.
void adamw_step(const std::vector<model::TensorView>& params, const std::vector<model::TensorView>& grads,
                AdamWState& state, double lr, double weight_decay, const AdamWOptions& options = {});

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without an improvement larger than min_delta.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, std::size_t patience, double factor, double min_lr, double min_delta);

    double step(double val_loss);
    [[nodiscard]] double lr() const noexcept { return lr_; }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double min_lr_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs_ = 0;
};

class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

    /// Records one epoch; returns true when training should stop.
    bool update(double val_loss);
    /// 1-based epoch of the last counted improvement.
    [[nodiscard]] std::size_t best_epoch() const noexcept { return best_epoch_; }
    [[nodiscard]] double best() const noexcept { return best_; }

private:
    std::size_t patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t epoch_ = 0;
    std::size_t bad_epochs_ = 0;
};

/// 1 - SS_res / SS_tot. Throws ZeroVariance when y is constant.
double r2(std::span<const double> y, std::span<const double> y_hat);
double mae(std::span<const double> y, std::span<const double> y_hat);

/// Rows for one property: targets in training space (log10 where flagged).
struct PropertyData {
    std::string property;
    pipeline::PropertyInfo info;
    std::vector<std::string> ids;
    std::vector<double> targets;
    nd::Tensor2 llm;
    nd::Tensor2 uni;
};

/// Throws MissingEmbedding naming the first id absent from either matrix.
PropertyData assemble(std::span<const pipeline::PolymerRecord> records, const embed::EmbeddingMatrix& llm,
                      const embed::EmbeddingMatrix& uni, std::string_view property,
                      const pipeline::PropertyCatalog& catalog = pipeline::PropertyCatalog::standard());

/// Fetches the rows for `ids` in order. Throws MissingEmbedding.
nd::Tensor2 gather_rows(const embed::EmbeddingMatrix& matrix, std::span<const std::string> ids);

struct FoldReport {
    std::size_t fold = 0;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    double best_val_loss = 0.0;
    std::vector<double> val_history;
    double final_lr = 0.0;
    double test_r2 = 0.0;
    double test_mae = 0.0;           // training space
    double test_mae_original = 0.0;  // original units
    std::string checkpoint_path;
};

struct RunReport {
    std::string property;
    std::string model = "polyllmem";
    bool log_scale = false;
    std::string config_json;  // TrainConfig (or baseline settings) as JSON
    std::uint64_t split_seed = 0;
    std::size_t n_records = 0;
    std::size_t n_test = 0;
    std::vector<FoldReport> folds;
    double r2_mean = 0.0;
    double r2_std = 0.0;
    double mae_mean = 0.0;
    double mae_std = 0.0;
    double mae_original_mean = 0.0;
    double mae_original_std = 0.0;
    double val_loss_mean = 0.0;

    /// Recomputes every aggregate from `folds` (population std).
    void summarize();
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view text);
/// One row per fold plus `mean` and `std` rows.
std::string report_to_csv(const RunReport& report);
/// Groups reports by property (folds concatenated, aggregates recomputed)
/// and emits one row per property in lexicographic order.
std::string merge_reports_csv(std::span<const RunReport> reports);

struct TrainOptions {
    std::size_t threads = 1;
    std::filesystem::path checkpoint_dir;  // empty: keep best weights in memory only
    std::uint64_t job_index = 0;           // mixed into per-fold seeds
};

struct FoldResult {
    FoldReport report;
    model::Checkpoint checkpoint;
};

/// Trains fold `fold` of the split; the best-validation weights are evaluated
/// on the held-out test ids.
FoldResult train_fold(const PropertyData& data, const pipeline::SplitPlan& plan, const TrainConfig& config,
                      std::size_t fold, std::uint64_t job_index = 0);

RunReport train_cv(const PropertyData& data, const TrainConfig& config, const TrainOptions& options = {});

struct Grid {
    std::vector<std::size_t> batch_size;
    std::vector<std::size_t> hidden;
    std::vector<std::size_t> rank;
    std::vector<double> alpha;
    std::vector<double> lr;
    std::vector<double> weight_decay;
    std::vector<double> dropout;
    TrainConfig base;
    std::vector<std::size_t> subset;  // indices into the expanded product; empty = all

    /// Cartesian product in lexicographic config order, filtered by subset.
    [[nodiscard]] std::vector<TrainConfig> expand() const;
    /// Endpoints of the tuning ranges used for the reference model.
    static Grid reference(const TrainConfig& base);
};

/// {"base": {...TrainConfig}, "batch_size": [...], ..., "subset": [...]};
/// omitted axes take the base value.
Grid grid_from_json(std::string_view text);

struct GridResult {
    std::size_t best_index = 0;
    std::vector<TrainConfig> configs;
    std::vector<RunReport> reports;
};

/// Selects the lowest mean validation loss; ties go to the smaller config.
GridResult grid_search(const PropertyData& data, const Grid& grid, const TrainOptions& options = {});
/// Same selection over precomputed reports.
std::size_t select_best(std::span<const TrainConfig> configs, std::span<const RunReport> reports);
std::string grid_result_to_json(const GridResult& result);

/// w = (X^T X + lambda I)^{-1} X^T y. Cholesky for lambda > 0, rank-revealing
/// QR on X for lambda = 0 (throws Singular when X is rank deficient).
std::vector<double> ridge_fit(const nd::Tensor2& x, std::span<const double> y, double lambda);
std::vector<double> ridge_predict(const nd::Tensor2& x, std::span<const double> w);

struct RidgeOptions {
    std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    std::uint64_t seed = 42;
};

/// Ridge on [text | structure] features with the same split and folds as
/// train_cv for the same seed. Features and targets are centered on the
/// training folds; lambda is chosen per fold by validation MSE.
RunReport ridge_baseline(const PropertyData& data, const RidgeOptions& options = {});

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

} // namespace polyllmem::train

#endif // POLYLLMEM_TRAINER_HPP
