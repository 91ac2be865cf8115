#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "covnet/dataset.hpp"
#include "covnet/model.hpp"

namespace covnet {

struct TrainConfig {
    double learning_rate = 1e-4;   // reference protocol value; sweeps override
    std::int64_t batch_size = 200;
    std::int64_t epochs = 400;
    std::uint64_t seed = 0;
    std::int64_t eval_every_steps = 0;  // 0 = evaluate at epoch ends only
    // finite value: re-run covariance preprocessing on noise-injected C_n
    // during training (the robustness protocol trains clean by default)
    double covariance_snr_db = std::numeric_limits<double>::infinity();
    bool shuffle = true;

    void validate(std::int64_t train_size) const;
};

struct MetricsRow {
    std::string run_id;
    std::string variant;
    std::int64_t cr = 0;
    double cov_snr_db = std::numeric_limits<double>::infinity();
    std::int64_t epoch = 0;
    double train_mse = 0;
    double eval_nmse_db = 0;   // finite or the -inf sentinel, never NaN
    std::int64_t flops_total = 0;
    double wallclock_s = 0;
};

inline constexpr const char* kMetricsHeader =
    "run_id,variant,cr,cov_snr_db,epoch,train_mse,eval_nmse_db,flops_total,wallclock_s";

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
// Throws on malformed input, naming the file and 1-based row.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

struct EvalResult {
    double mean_nmse_linear = 0;
    double mean_nmse_db = 0;       // 10·log10 of the mean per-sample ratio
    double p50_db = 0, p90_db = 0; // per-sample distribution percentiles
    std::int64_t n = 0;
};

// Mean of per-sample ‖H−Ĥ‖²/‖H‖² over the set (then dB). Does not mutate the model.
EvalResult evaluate(CovNetModel<float>& model, const std::vector<DatasetSample>& eval_set,
                    std::int64_t batch_size = 100);

// Rebuilds each sample's Q̄/C̄ from its raw covariance matrices, optionally
// injecting Hermitian noise at snr_db first (the Fig.-4-style protocol).
// Samples must have been loaded with load_covariance=true.
void repreprocess_covariance(std::vector<DatasetSample>& samples, double snr_db, std::uint64_t seed,
                             const PreprocessOptions& opt = {});

struct TrainResult {
    std::vector<MetricsRow> rows;      // one per evaluation point
    std::vector<double> step_losses;   // per-step batch MSE
    double best_eval_nmse_db = std::numeric_limits<double>::infinity();
    std::int64_t best_epoch = 0;
    double final_train_mse = 0;
    double wallclock_s = 0;
};

// Minimizes batch-mean MSE on the stacked-real channel via Adam. Deterministic
// given (seed, config). Periodically evaluates, keeps the best-eval parameters,
// and leaves the model holding them on return. Throws on non-finite loss.
TrainResult train_model(CovNetModel<float>& model, const std::vector<DatasetSample>& train_set,
                        const std::vector<DatasetSample>& eval_set, const TrainConfig& tc,
                        const std::string& run_id, std::ostream* progress = nullptr);

struct SweepResult {
    std::vector<MetricsRow> rows;
    std::vector<std::string> run_ids;
    std::vector<std::string> checkpoint_paths;  // one per run, "" if not saved
    std::vector<std::int64_t> best_epochs;
};

// Trains one cell per (cr, variant) with a shared seed and dataset; writes
// <out_dir>/<run_id>.cvnt checkpoints when out_dir is non-empty. `workers`
// bounds fan-out threads; cells are independent and results are collected in
// grid order, so parallelism does not change any output.
SweepResult sweep_cr(const std::vector<DatasetSample>& train_set, const std::vector<DatasetSample>& eval_set,
                     const ModelConfig& base_model, const TrainConfig& tc,
                     const std::vector<std::int64_t>& crs, const std::vector<Variant>& variants,
                     const std::string& out_dir, int workers = 1, std::ostream* progress = nullptr);

// Evaluation-time covariance noise: for each SNR, re-runs preprocessing on
// noisy C_n and evaluates the (already trained) model. eval_set must carry raw
// covariances. +inf SNR reproduces the clean evaluation exactly.
std::vector<MetricsRow> sweep_noise(CovNetModel<float>& model, std::vector<DatasetSample>& eval_set,
                                    const std::vector<double>& snrs_db, std::uint64_t seed,
                                    const std::string& run_id_base, std::int64_t checkpoint_epoch,
                                    std::int64_t batch_size = 100, std::ostream* progress = nullptr);

// Bounded worker count: COVNET_THREADS env var, else `flag_value`, else 1.
int resolve_workers(int flag_value);

}  // namespace covnet
