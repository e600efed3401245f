// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/trainer.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace polyllmem::train {

using json = nlohmann::json;
using nd::Mode;
using nd::Tensor2;

namespace {

json config_json(const TrainConfig& c)
{
    return json{{"batch_size", c.batch_size},
                {"hidden", c.hidden},
                {"rank", c.rank},
                {"alpha", c.alpha},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"dropout", c.dropout},
                {"loss", model::loss_name(c.loss.kind)},
                {"huber_delta", c.loss.delta},
                {"max_epochs", c.max_epochs},
                {"patience_early", c.patience_early},
                {"patience_lr", c.patience_lr},
                {"lr_factor", c.lr_factor},
                {"min_lr", c.min_lr},
                {"min_delta", c.min_delta},
                {"seed", c.seed},
                {"use_lora", c.use_lora}};
}

TrainConfig config_from(const json& j, TrainConfig c)
{
    static const std::set<std::string> known{"batch_size", "hidden",      "rank",           "alpha",
                                             "lr",         "weight_decay", "dropout",        "loss",
                                             "huber_delta", "max_epochs",  "patience_early", "patience_lr",
                                             "lr_factor",  "min_lr",      "min_delta",      "seed",
                                             "use_lora"};
    require(j.is_object(), ErrorCode::InvalidArgument, "training config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        require(known.count(key) != 0, ErrorCode::InvalidArgument, "unknown training config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j.at(key).get<std::decay_t<decltype(field)>>();
            }
        };
        get("batch_size", c.batch_size);
        get("hidden", c.hidden);
        get("rank", c.rank);
        get("alpha", c.alpha);
        get("lr", c.lr);
        get("weight_decay", c.weight_decay);
        get("dropout", c.dropout);
        if (j.contains("loss")) {
            c.loss.kind = model::parse_loss(j.at("loss").get<std::string>());
        }
        get("huber_delta", c.loss.delta);
        get("max_epochs", c.max_epochs);
        get("patience_early", c.patience_early);
        get("patience_lr", c.patience_lr);
        get("lr_factor", c.lr_factor);
        get("min_lr", c.min_lr);
        get("min_delta", c.min_delta);
        get("seed", c.seed);
        get("use_lora", c.use_lora);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("bad training config value: ") + e.what());
    }
    return c;
}

json parse_json(std::string_view text, const char* what)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string(what) + " is not valid JSON: " + e.what());
    }
}

auto config_key(const TrainConfig& c)
{
    return std::make_tuple(c.batch_size, c.hidden, c.rank, c.alpha, c.lr, c.weight_decay, c.dropout);
}

double mean_of(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double pop_std(std::span<const double> v)
{
    if (v.empty()) {
        return 0.0;
    }
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
}

Tensor2 select_rows(const Tensor2& src, std::span<const std::size_t> rows)
{
    Tensor2 out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = src.row(rows[i]);
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

std::vector<double> select(std::span<const double> src, std::span<const std::size_t> rows)
{
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) {
        out.push_back(src[r]);
    }
    return out;
}

// Row indices of the train, validation and test partitions for one fold.
struct FoldRows {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

FoldRows fold_rows(const PropertyData& data, const pipeline::SplitPlan& plan, std::size_t fold)
{
    require(fold < pipeline::kFolds, ErrorCode::InvalidArgument, "fold index out of range");
    std::map<std::string_view, std::size_t> row;
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
        row.emplace(data.ids[i], i);
    }
    auto lookup = [&](const std::string& id) {
        const auto it = row.find(id);
        require(it != row.end(), ErrorCode::InvalidArgument, "split references unknown id '" + id + "'");
        return it->second;
    };
    FoldRows out;
    for (std::size_t f = 0; f < pipeline::kFolds; ++f) {
        for (const auto& id : plan.folds[f]) {
            (f == fold ? out.val : out.train).push_back(lookup(id));
        }
    }
    for (const auto& id : plan.test_ids) {
        out.test.push_back(lookup(id));
    }
    require(out.train.size() >= 2 && !out.val.empty() && out.test.size() >= 2, ErrorCode::DegenerateFold,
            "fold " + std::to_string(fold) + " is too small to train and evaluate");
    return out;
}

pipeline::SplitPlan split_for(const PropertyData& data, std::uint64_t seed)
{
    return pipeline::make_split(data.ids, seed);
}

json fold_json(const FoldReport& f)
{
    return json{{"fold", f.fold},
                {"n_train", f.n_train},
                {"n_val", f.n_val},
                {"best_epoch", f.best_epoch},
                {"epochs_run", f.epochs_run},
                {"best_val_loss", f.best_val_loss},
                {"val_history", f.val_history},
                {"final_lr", f.final_lr},
                {"test_r2", f.test_r2},
                {"test_mae", f.test_mae},
                {"test_mae_original", f.test_mae_original},
                {"checkpoint", f.checkpoint_path}};
}

json report_json(const RunReport& r)
{
    json folds = json::array();
    for (const auto& f : r.folds) {
        folds.push_back(fold_json(f));
    }
    return json{{"property", r.property},
                {"model", r.model},
                {"log_scale", r.log_scale},
                {"config", parse_json(r.config_json, "report config")},
                {"split_seed", r.split_seed},
                {"n_records", r.n_records},
                {"n_test", r.n_test},
                {"folds", folds},
                {"r2_mean", r.r2_mean},
                {"r2_std", r.r2_std},
                {"mae_mean", r.mae_mean},
                {"mae_std", r.mae_std},
                {"mae_original_mean", r.mae_original_mean},
                {"mae_original_std", r.mae_original_std},
                {"val_loss_mean", r.val_loss_mean}};
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void TrainConfig::validate() const
{
    require(batch_size >= 2, ErrorCode::InvalidArgument, "batch_size must be at least 2");
    require(hidden >= 2, ErrorCode::InvalidArgument, "hidden must be at least 2");
    require(!use_lora || (rank >= 1 && alpha > 0.0), ErrorCode::InvalidArgument, "rank and alpha must be positive");
    require(lr > 0.0 && weight_decay >= 0.0, ErrorCode::InvalidArgument, "lr must be positive, weight_decay >= 0");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must lie in [0, 1)");
    require(loss.delta > 0.0, ErrorCode::InvalidArgument, "huber_delta must be positive");
    require(max_epochs >= 1 && patience_early >= 1 && patience_lr >= 1, ErrorCode::InvalidArgument,
            "max_epochs and patience values must be positive");
    require(lr_factor > 0.0 && lr_factor < 1.0, ErrorCode::InvalidArgument, "lr_factor must lie in (0, 1)");
    require(min_lr > 0.0 && min_delta >= 0.0, ErrorCode::InvalidArgument, "min_lr must be positive, min_delta >= 0");
}

bool operator==(const TrainConfig& a, const TrainConfig& b) noexcept
{
    return config_key(a) == config_key(b) && a.loss.kind == b.loss.kind && a.loss.delta == b.loss.delta &&
           a.max_epochs == b.max_epochs && a.patience_early == b.patience_early && a.patience_lr == b.patience_lr &&
           a.lr_factor == b.lr_factor && a.min_lr == b.min_lr && a.min_delta == b.min_delta && a.seed == b.seed &&
           a.use_lora == b.use_lora;
}

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig config_from_json(std::string_view text, const TrainConfig& base)
{
    return config_from(parse_json(text, "training config"), base);
}

model::ModelConfig model_config(const TrainConfig& config, std::size_t llm_dim, std::size_t uni_dim)
{
    model::ModelConfig m;
    m.llm_dim = llm_dim;
    m.uni_dim = uni_dim;
    m.hidden = config.hidden;
    m.rank = config.rank;
    m.alpha = config.alpha;
    m.dropout = config.dropout;
    m.use_lora = config.use_lora;
    return m;
}

bool config_less(const TrainConfig& a, const TrainConfig& b) noexcept { return config_key(a) < config_key(b); }

void adamw_step(const std::vector<model::TensorView>& params, const std::vector<model::TensorView>& grads,
                AdamWState& state, double lr, double weight_decay, const AdamWOptions& options)
{
    require(params.size() == grads.size(), ErrorCode::ShapeMismatch, "adamw: parameter and gradient lists differ");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.data.size(), 0.0);
            state.v.emplace_back(p.data.size(), 0.0);
        }
    }
    require(state.m.size() == params.size(), ErrorCode::ShapeMismatch, "adamw: optimizer state does not match");
    ++state.step;
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto theta = params[t].data;
        auto g = grads[t].data;
        auto& m = state.m[t];
        auto& v = state.v[t];
        require(theta.size() == g.size() && m.size() == theta.size(), ErrorCode::ShapeMismatch,
                "adamw: shape mismatch in tensor '" + params[t].name + "'");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
            v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + options.eps) + weight_decay * theta[i]);
        }
    }
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double min_lr, double min_delta)
    : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr), min_delta_(min_delta)
{
    require(factor > 0.0 && factor < 1.0, ErrorCode::InvalidArgument, "lr_factor must lie in (0, 1)");
}

double PlateauScheduler::step(double val_loss)
{
    if (val_loss < best_ - min_delta_) {
        best_ = val_loss;
        bad_epochs_ = 0;
    } else if (++bad_epochs_ >= patience_) {
        lr_ = std::max(min_lr_, lr_ * factor_);
        bad_epochs_ = 0;
    }
    return lr_;
}

bool EarlyStopping::update(double val_loss)
{
    ++epoch_;
    if (val_loss < best_ - min_delta_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        bad_epochs_ = 0;
        return false;
    }
    return ++bad_epochs_ >= patience_;
}

double r2(std::span<const double> y, std::span<const double> y_hat)
{
    require(y.size() == y_hat.size(), ErrorCode::ShapeMismatch, "r2: length mismatch");
    require(y.size() >= 2, ErrorCode::EmptyInput, "r2 needs at least 2 values");
    const double mean = mean_of(y);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    require(ss_tot > 0.0, ErrorCode::ZeroVariance, "r2 is undefined for constant targets");
    return 1.0 - ss_res / ss_tot;
}

double mae(std::span<const double> y, std::span<const double> y_hat)
{
    require(y.size() == y_hat.size(), ErrorCode::ShapeMismatch, "mae: length mismatch");
    require(!y.empty(), ErrorCode::EmptyInput, "mae of an empty set");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += std::abs(y[i] - y_hat[i]);
    }
    return s / static_cast<double>(y.size());
}

Tensor2 gather_rows(const embed::EmbeddingMatrix& matrix, std::span<const std::string> ids)
{
    const auto index = matrix.index();
    Tensor2 out(ids.size(), matrix.meta.dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = index.find(ids[i]);
        if (it == index.end()) {
            fail(ErrorCode::MissingEmbedding, "no " + std::string(embed::modality_name(matrix.meta.modality)) +
                                                  " embedding for id '" + ids[i] + "'");
        }
        const auto& v = matrix.records[it->second].vector;
        auto row = out.row(i);
        for (std::size_t d = 0; d < v.size(); ++d) {
            row[d] = static_cast<double>(v[d]);
        }
    }
    return out;
}

PropertyData assemble(std::span<const pipeline::PolymerRecord> records, const embed::EmbeddingMatrix& llm,
                      const embed::EmbeddingMatrix& uni, std::string_view property,
                      const pipeline::PropertyCatalog& catalog)
{
    PropertyData data;
    data.property = std::string(property);
    data.info = catalog.at(property);
    for (const auto* rec : pipeline::records_with(records, property)) {
        data.ids.push_back(rec->id);
        data.targets.push_back(pipeline::transform_target(rec->values.at(data.property), data.info));
    }
    data.llm = gather_rows(llm, data.ids);
    data.uni = gather_rows(uni, data.ids);
    return data;
}

void RunReport::summarize()
{
    std::vector<double> r2s;
    std::vector<double> maes;
    std::vector<double> maes_orig;
    std::vector<double> vals;
    for (const auto& f : folds) {
        r2s.push_back(f.test_r2);
        maes.push_back(f.test_mae);
        maes_orig.push_back(f.test_mae_original);
        vals.push_back(f.best_val_loss);
    }
    r2_mean = mean_of(r2s);
    r2_std = pop_std(r2s);
    mae_mean = mean_of(maes);
    mae_std = pop_std(maes);
    mae_original_mean = mean_of(maes_orig);
    mae_original_std = pop_std(maes_orig);
    val_loss_mean = mean_of(vals);
}

std::string report_to_json(const RunReport& report) { return report_json(report).dump(2); }

RunReport report_from_json(std::string_view text)
{
    const json j = parse_json(text, "run report");
    RunReport r;
    try {
        r.property = j.at("property").get<std::string>();
        r.model = j.value("model", std::string("polyllmem"));
        r.log_scale = j.at("log_scale").get<bool>();
        r.config_json = j.at("config").dump();
        r.split_seed = j.at("split_seed").get<std::uint64_t>();
        r.n_records = j.at("n_records").get<std::size_t>();
        r.n_test = j.at("n_test").get<std::size_t>();
        for (const auto& f : j.at("folds")) {
            FoldReport fr;
            fr.fold = f.at("fold").get<std::size_t>();
            fr.n_train = f.at("n_train").get<std::size_t>();
            fr.n_val = f.at("n_val").get<std::size_t>();
            fr.best_epoch = f.at("best_epoch").get<std::size_t>();
            fr.epochs_run = f.at("epochs_run").get<std::size_t>();
            fr.best_val_loss = f.at("best_val_loss").get<double>();
            fr.val_history = f.at("val_history").get<std::vector<double>>();
            fr.final_lr = f.at("final_lr").get<double>();
            fr.test_r2 = f.at("test_r2").get<double>();
            fr.test_mae = f.at("test_mae").get<double>();
            fr.test_mae_original = f.at("test_mae_original").get<double>();
            fr.checkpoint_path = f.at("checkpoint").get<std::string>();
            r.folds.push_back(std::move(fr));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed run report: ") + e.what());
    }
    r.summarize();
    return r;
}

std::string report_to_csv(const RunReport& report)
{
    std::ostringstream out;
    out << "property,model,fold,best_epoch,best_val_loss,test_r2,test_mae,test_mae_original\n";
    for (const auto& f : report.folds) {
        out << report.property << ',' << report.model << ',' << f.fold << ',' << f.best_epoch << ','
            << num(f.best_val_loss) << ',' << num(f.test_r2) << ',' << num(f.test_mae) << ','
            << num(f.test_mae_original) << '\n';
    }
    out << report.property << ',' << report.model << ",mean,," << num(report.val_loss_mean) << ','
        << num(report.r2_mean) << ',' << num(report.mae_mean) << ',' << num(report.mae_original_mean) << '\n';
    out << report.property << ',' << report.model << ",std,,," << num(report.r2_std) << ',' << num(report.mae_std)
        << ',' << num(report.mae_original_std) << '\n';
    return out.str();
}

std::string merge_reports_csv(std::span<const RunReport> reports)
{
    std::map<std::pair<std::string, std::string>, RunReport> grouped;
    for (const auto& r : reports) {
        auto [it, inserted] = grouped.try_emplace({r.property, r.model}, r);
        if (!inserted) {
            it->second.folds.insert(it->second.folds.end(), r.folds.begin(), r.folds.end());
        }
    }
    std::ostringstream out;
    out << "property,model,n_folds,r2_mean,r2_std,mae_mean,mae_std,mae_original_mean,mae_original_std,"
           "val_loss_mean\n";
    for (auto& [key, r] : grouped) {
        r.summarize();
        out << r.property << ',' << r.model << ',' << r.folds.size() << ',' << num(r.r2_mean) << ','
            << num(r.r2_std) << ',' << num(r.mae_mean) << ',' << num(r.mae_std) << ','
            << num(r.mae_original_mean) << ',' << num(r.mae_original_std) << ',' << num(r.val_loss_mean) << '\n';
    }
    return out.str();
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                // Keep the lowest failing index so the reported error does not
                // depend on scheduling.
                std::lock_guard lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

FoldResult train_fold(const PropertyData& data, const pipeline::SplitPlan& plan, const TrainConfig& config,
                      std::size_t fold, std::uint64_t job_index)
{
    config.validate();
    const FoldRows rows = fold_rows(data, plan, fold);
    const auto train_targets = select(data.targets, rows.train);
    const auto scaler = pipeline::Standardizer::fit(train_targets);

    std::vector<double> z(data.targets.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = scaler.apply(data.targets[i]);
    }
    const Tensor2 val_llm = select_rows(data.llm, rows.val);
    const Tensor2 val_uni = select_rows(data.uni, rows.val);
    const auto val_z = select(z, rows.val);

    const std::uint64_t job_seed = derive_seed(config.seed, fold, job_index);
    const auto mcfg = model_config(config, data.llm.cols(), data.uni.cols());
    model::ModelParams params = model::ModelParams::initialize(mcfg, job_seed);
    SplitMix64 shuffle_rng(derive_seed(job_seed, "shuffle"));
    SplitMix64 dropout_rng(derive_seed(job_seed, "dropout"));

    AdamWState opt;
    PlateauScheduler scheduler(config.lr, config.patience_lr, config.lr_factor, config.min_lr, config.min_delta);
    EarlyStopping stopper(config.patience_early, config.min_delta);

    FoldResult result;
    FoldReport& rep = result.report;
    rep.fold = fold;
    rep.n_train = rows.train.size();
    rep.n_val = rows.val.size();
    rep.best_val_loss = std::numeric_limits<double>::infinity();
    model::ModelParams best = params;

    std::vector<std::size_t> order = rows.train;
    std::vector<std::size_t> batch;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);
        }
        for (std::size_t start = 0; start < order.size();) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            // Batch norm needs two rows: a trailing single row joins the previous batch.
            if (order.size() - end == 1) {
                end = order.size();
            }
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto targets = select(z, batch);
            auto lg = model::loss_and_grads(params, select_rows(data.llm, batch), select_rows(data.uni, batch),
                                            targets, config.loss, Mode::Train, &dropout_rng);
            adamw_step(params.trainable(), lg.grads.trainable(), opt, scheduler.lr(), config.weight_decay);
            model::update_running_stats(params, lg.cache);
            start = end;
        }

        const auto val_pred = model::forward(params, val_llm, val_uni, Mode::Eval);
        const double val_loss = model::loss_value(val_pred, val_z, config.loss);
        if (!std::isfinite(val_loss)) {
            fail(ErrorCode::Numerical, "validation loss became non-finite in fold " + std::to_string(fold));
        }
        rep.val_history.push_back(val_loss);
        rep.epochs_run = epoch;
        if (val_loss < rep.best_val_loss) {
            rep.best_val_loss = val_loss;
            rep.best_epoch = epoch;
            best = params;
        }
        scheduler.step(val_loss);
        if (stopper.update(val_loss)) {
            break;
        }
    }
    rep.final_lr = scheduler.lr();

    const auto test_pred_z = model::forward(best, select_rows(data.llm, rows.test), select_rows(data.uni, rows.test),
                                            Mode::Eval);
    const auto test_y = select(data.targets, rows.test);
    std::vector<double> test_pred(test_pred_z.size());
    std::vector<double> y_orig(test_y.size());
    std::vector<double> pred_orig(test_y.size());
    for (std::size_t i = 0; i < test_pred.size(); ++i) {
        test_pred[i] = scaler.invert(test_pred_z[i]);
        y_orig[i] = pipeline::inverse_transform(test_y[i], data.info);
        pred_orig[i] = pipeline::inverse_transform(test_pred[i], data.info);
    }
    rep.test_r2 = r2(test_y, test_pred);
    rep.test_mae = mae(test_y, test_pred);
    rep.test_mae_original = mae(y_orig, pred_orig);

    result.checkpoint.params = std::move(best);
    result.checkpoint.meta = model::CheckpointMeta{data.property, data.info.log_scale, scaler.mean, scaler.std,
                                                   rep.best_epoch, rep.best_val_loss, job_seed, fold};
    return result;
}

namespace {

RunReport make_report(const PropertyData& data, const pipeline::SplitPlan& plan, std::string config_text)
{
    RunReport report;
    report.property = data.property;
    report.log_scale = data.info.log_scale;
    report.config_json = std::move(config_text);
    report.split_seed = plan.seed;
    report.n_records = data.ids.size();
    report.n_test = plan.test_ids.size();
    return report;
}

void store_checkpoint(FoldResult& r, const TrainOptions& options, const std::string& stem)
{
    if (options.checkpoint_dir.empty()) {
        return;
    }
    std::filesystem::create_directories(options.checkpoint_dir);
    const auto path = options.checkpoint_dir / (stem + "_fold" + std::to_string(r.report.fold) + ".plym");
    model::save_checkpoint(r.checkpoint, path);
    r.report.checkpoint_path = path.string();
}

} // namespace

RunReport train_cv(const PropertyData& data, const TrainConfig& config, const TrainOptions& options)
{
    config.validate();
    const auto plan = split_for(data, config.seed);
    std::vector<FoldResult> results(pipeline::kFolds);
    parallel_for(pipeline::kFolds, options.threads, [&](std::size_t fold) {
        results[fold] = train_fold(data, plan, config, fold, options.job_index);
        store_checkpoint(results[fold], options, data.property);
    });
    RunReport report = make_report(data, plan, config_to_json(config));
    for (auto& r : results) {
        report.folds.push_back(std::move(r.report));
    }
    report.summarize();
    return report;
}

std::vector<TrainConfig> Grid::expand() const
{
    auto axis_s = [](const std::vector<std::size_t>& v, std::size_t fallback) {
        std::vector<std::size_t> out = v.empty() ? std::vector<std::size_t>{fallback} : v;
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };
    auto axis_d = [](const std::vector<double>& v, double fallback) {
        std::vector<double> out = v.empty() ? std::vector<double>{fallback} : v;
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };
    std::vector<TrainConfig> all;
    for (auto bs : axis_s(batch_size, base.batch_size)) {
        for (auto h : axis_s(hidden, base.hidden)) {
            for (auto r : axis_s(rank, base.rank)) {
                for (auto a : axis_d(alpha, base.alpha)) {
                    for (auto l : axis_d(lr, base.lr)) {
                        for (auto wd : axis_d(weight_decay, base.weight_decay)) {
                            for (auto dp : axis_d(dropout, base.dropout)) {
                                TrainConfig c = base;
                                c.batch_size = bs;
                                c.hidden = h;
                                c.rank = r;
                                c.alpha = a;
                                c.lr = l;
                                c.weight_decay = wd;
                                c.dropout = dp;
                                all.push_back(c);
                            }
                        }
                    }
                }
            }
        }
    }
    if (subset.empty()) {
        return all;
    }
    std::vector<TrainConfig> picked;
    std::set<std::size_t> unique(subset.begin(), subset.end());
    for (auto i : unique) {
        require(i < all.size(), ErrorCode::InvalidArgument,
                "grid subset index " + std::to_string(i) + " exceeds grid size " + std::to_string(all.size()));
        picked.push_back(all[i]);
    }
    return picked;
}

Grid Grid::reference(const TrainConfig& base)
{
    Grid g;
    g.base = base;
    g.batch_size = {8, 64};
    g.hidden = {512, 4096};
    g.rank = {4, 32};
    g.alpha = {4, 128};
    g.lr = {5e-5, 1e-4};
    g.weight_decay = {1e-5, 1e-3};
    g.dropout = {0.0, 0.5};
    return g;
}

Grid grid_from_json(std::string_view text)
{
    const json j = parse_json(text, "grid");
    require(j.is_object(), ErrorCode::InvalidArgument, "grid must be a JSON object");
    static const std::set<std::string> known{"base",         "batch_size", "hidden", "rank",  "alpha", "lr",
                                             "weight_decay", "dropout",    "subset"};
    for (const auto& [key, value] : j.items()) {
        require(known.count(key) != 0, ErrorCode::InvalidArgument, "unknown grid key '" + key + "'");
    }
    Grid g;
    try {
        if (j.contains("base")) {
            g.base = config_from(j.at("base"), TrainConfig{});
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j.at(key).get<std::decay_t<decltype(field)>>();
            }
        };
        get("batch_size", g.batch_size);
        get("hidden", g.hidden);
        get("rank", g.rank);
        get("alpha", g.alpha);
        get("lr", g.lr);
        get("weight_decay", g.weight_decay);
        get("dropout", g.dropout);
        get("subset", g.subset);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("bad grid value: ") + e.what());
    }
    return g;
}

std::size_t select_best(std::span<const TrainConfig> configs, std::span<const RunReport> reports)
{
    require(!configs.empty() && configs.size() == reports.size(), ErrorCode::EmptyInput, "grid is empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const double a = reports[i].val_loss_mean;
        const double b = reports[best].val_loss_mean;
        if (a < b || (a == b && config_less(configs[i], configs[best]))) {
            best = i;
        }
    }
    return best;
}

GridResult grid_search(const PropertyData& data, const Grid& grid, const TrainOptions& options)
{
    GridResult result;
    result.configs = grid.expand();
    require(!result.configs.empty(), ErrorCode::EmptyInput, "grid is empty");
    for (const auto& c : result.configs) {
        c.validate();
    }
    const auto plan = split_for(data, grid.base.seed);
    const std::size_t n_cfg = result.configs.size();
    std::vector<FoldResult> folds(n_cfg * pipeline::kFolds);
    parallel_for(folds.size(), options.threads, [&](std::size_t job) {
        const std::size_t cfg = job / pipeline::kFolds;
        const std::size_t fold = job % pipeline::kFolds;
        auto config = result.configs[cfg];
        config.seed = grid.base.seed;
        folds[job] = train_fold(data, plan, config, fold, options.job_index + cfg);
        store_checkpoint(folds[job], options, data.property + "_cfg" + std::to_string(cfg));
    });
    for (std::size_t cfg = 0; cfg < n_cfg; ++cfg) {
        RunReport report = make_report(data, plan, config_to_json(result.configs[cfg]));
        for (std::size_t f = 0; f < pipeline::kFolds; ++f) {
            report.folds.push_back(std::move(folds[cfg * pipeline::kFolds + f].report));
        }
        report.summarize();
        result.reports.push_back(std::move(report));
    }
    result.best_index = select_best(result.configs, result.reports);
    return result;
}

std::string grid_result_to_json(const GridResult& result)
{
    json runs = json::array();
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        runs.push_back(json{{"index", i}, {"report", report_json(result.reports[i])}});
    }
    return json{{"best_index", result.best_index},
                {"best_config", config_json(result.configs.at(result.best_index))},
                {"best_val_loss_mean", result.reports.at(result.best_index).val_loss_mean},
                {"runs", runs}}
        .dump(2);
}

RunReport ridge_baseline(const PropertyData& data, const RidgeOptions& options)
{
    require(!options.lambdas.empty(), ErrorCode::InvalidArgument, "ridge baseline needs at least one lambda");
    const auto plan = split_for(data, options.seed);
    const std::size_t d_llm = data.llm.cols();
    const std::size_t d = d_llm + data.uni.cols();
    Tensor2 features(data.ids.size(), d);
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
        auto row = features.row(i);
        std::copy(data.llm.row(i).begin(), data.llm.row(i).end(), row.begin());
        std::copy(data.uni.row(i).begin(), data.uni.row(i).end(), row.begin() + static_cast<std::ptrdiff_t>(d_llm));
    }

    json settings{{"model", "ridge"}, {"lambdas", options.lambdas}, {"seed", options.seed}};
    RunReport report = make_report(data, plan, settings.dump());
    report.model = "ridge";
    for (std::size_t fold = 0; fold < pipeline::kFolds; ++fold) {
        const FoldRows rows = fold_rows(data, plan, fold);
        Tensor2 xtr = select_rows(features, rows.train);
        auto ytr = select(data.targets, rows.train);
        std::vector<double> col_mean(d, 0.0);
        nd::add_column_sums(xtr, col_mean);
        for (auto& m : col_mean) {
            m /= static_cast<double>(rows.train.size());
        }
        const double y_mean = mean_of(ytr);
        auto center = [&](Tensor2 x) {
            for (std::size_t i = 0; i < x.rows(); ++i) {
                auto r = x.row(i);
                for (std::size_t j = 0; j < d; ++j) {
                    r[j] -= col_mean[j];
                }
            }
            return x;
        };
        xtr = center(std::move(xtr));
        for (auto& y : ytr) {
            y -= y_mean;
        }
        const Tensor2 xval = center(select_rows(features, rows.val));
        const auto yval = select(data.targets, rows.val);

        FoldReport rep;
        rep.fold = fold;
        rep.n_train = rows.train.size();
        rep.n_val = rows.val.size();
        rep.best_val_loss = std::numeric_limits<double>::infinity();
        std::vector<double> best_w;
        for (std::size_t k = 0; k < options.lambdas.size(); ++k) {
            const auto w = ridge_fit(xtr, ytr, options.lambdas[k]);
            auto pred = ridge_predict(xval, w);
            for (auto& p : pred) {
                p += y_mean;
            }
            const double loss = model::loss_value(pred, yval, {});
            rep.val_history.push_back(loss);
            if (loss < rep.best_val_loss) {
                rep.best_val_loss = loss;
                rep.best_epoch = k + 1;
                best_w = w;
            }
        }
        rep.epochs_run = options.lambdas.size();
        rep.final_lr = options.lambdas[rep.best_epoch - 1];

        auto pred = ridge_predict(center(select_rows(features, rows.test)), best_w);
        const auto ytest = select(data.targets, rows.test);
        std::vector<double> y_orig;
        std::vector<double> p_orig;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pred[i] += y_mean;
            y_orig.push_back(pipeline::inverse_transform(ytest[i], data.info));
            p_orig.push_back(pipeline::inverse_transform(pred[i], data.info));
        }
        rep.test_r2 = r2(ytest, pred);
        rep.test_mae = mae(ytest, pred);
        rep.test_mae_original = mae(y_orig, p_orig);
        report.folds.push_back(std::move(rep));
    }
    report.summarize();
    return report;
}

} // namespace polyllmem::train
