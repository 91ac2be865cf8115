#include "covnet/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "covnet/transforms.hpp"

namespace covnet {

namespace {

using clk = std::chrono::steady_clock;

double elapsed_s(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Batch {
    Tensor<float> h, q_bar, c_bar;
};

Batch make_batch(const std::vector<DatasetSample>& set, const std::vector<std::int64_t>& order,
                 std::int64_t begin, std::int64_t end, const ModelConfig& cfg) {
    const std::int64_t b = end - begin;
    const std::int64_t raw = cfg.raw_len(), cb = 4 * cfg.n_t * cfg.n_t;
    const bool wants_cov = cfg.variant != Variant::no_covariance_baseline;
    std::vector<float> h(static_cast<std::size_t>(b * raw));
    std::vector<float> q, c;
    if (wants_cov) {
        q.resize(static_cast<std::size_t>(b * raw));
        c.resize(static_cast<std::size_t>(b * cb));
    }
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& s = set[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];
        if (static_cast<std::int64_t>(s.h_stacked.size()) != raw)
            throw std::invalid_argument("batch: sample H length " + std::to_string(s.h_stacked.size()) +
                                        " does not match model grid (" + std::to_string(raw) + ")");
        std::copy(s.h_stacked.begin(), s.h_stacked.end(), h.begin() + i * raw);
        if (wants_cov) {
            if (static_cast<std::int64_t>(s.q_bar_stacked.size()) != raw ||
                static_cast<std::int64_t>(s.c_bar_stacked.size()) != cb)
                throw std::invalid_argument("batch: sample lacks preprocessed covariance inputs");
            std::copy(s.q_bar_stacked.begin(), s.q_bar_stacked.end(), q.begin() + i * raw);
            std::copy(s.c_bar_stacked.begin(), s.c_bar_stacked.end(), c.begin() + i * cb);
        }
    }
    Batch out;
    out.h = Tensor<float>::from_data({b, 2 * cfg.n_a, cfg.n_t}, std::move(h));
    if (wants_cov) {
        out.q_bar = Tensor<float>::from_data({b, 2 * cfg.n_a, cfg.n_t}, std::move(q));
        out.c_bar = Tensor<float>::from_data({b, 4, cfg.n_t, cfg.n_t}, std::move(c));
    }
    return out;
}

std::vector<std::int64_t> identity_order(std::int64_t n) {
    std::vector<std::int64_t> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

std::vector<std::vector<float>> snapshot_params(const ParameterStore<float>& p) {
    std::vector<std::vector<float>> out;
    out.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p.tensor(i).data());
    return out;
}

void restore_params(ParameterStore<float>& p, const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < p.size(); ++i) p.tensor(i).mutable_data() = snap[i];
}

double percentile_db(std::vector<double> sorted_linear, double pct) {
    if (sorted_linear.empty()) return kNmseNegInfDb;
    const auto n = static_cast<std::int64_t>(sorted_linear.size());
    auto idx = static_cast<std::int64_t>(std::ceil(pct / 100.0 * static_cast<double>(n))) - 1;
    idx = std::clamp<std::int64_t>(idx, 0, n - 1);
    return nmse_db(sorted_linear[static_cast<std::size_t>(idx)]);
}

}  // namespace

void TrainConfig::validate(std::int64_t train_size) const {
    if (epochs < 0) throw std::invalid_argument("train config: negative epochs");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (batch_size > train_size)
        throw std::invalid_argument("train config: batch_size " + std::to_string(batch_size) +
                                    " exceeds training-set size " + std::to_string(train_size));
    if (!(learning_rate >= 0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open metrics file for writing: " + path);
    f << kMetricsHeader << "\n";
    for (const auto& r : rows) {
        f << r.run_id << ',' << r.variant << ',' << r.cr << ',' << fmt_double(r.cov_snr_db) << ',' << r.epoch << ','
          << fmt_double(r.train_mse) << ',' << fmt_double(r.eval_nmse_db) << ',' << r.flops_total << ','
          << fmt_double(r.wallclock_s) << "\n";
    }
    if (!f.flush()) throw std::runtime_error("failed writing metrics file: " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open metrics file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty metrics file");
    if (line != kMetricsHeader)
        throw std::runtime_error(path + " row 1: bad header '" + line + "'");
    std::vector<MetricsRow> rows;
    std::int64_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9)
            throw std::runtime_error(path + " row " + std::to_string(lineno) + ": expected 9 columns, got " +
                                     std::to_string(cells.size()));
        try {
            MetricsRow r;
            r.run_id = cells[0];
            r.variant = cells[1];
            r.cr = std::stoll(cells[2]);
            r.cov_snr_db = std::strtod(cells[3].c_str(), nullptr);
            r.epoch = std::stoll(cells[4]);
            r.train_mse = std::strtod(cells[5].c_str(), nullptr);
            r.eval_nmse_db = std::strtod(cells[6].c_str(), nullptr);
            r.flops_total = std::stoll(cells[7]);
            r.wallclock_s = std::strtod(cells[8].c_str(), nullptr);
            if (std::isnan(r.eval_nmse_db))
                throw std::invalid_argument("eval_nmse_db is NaN");
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + " row " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

EvalResult evaluate(CovNetModel<float>& model, const std::vector<DatasetSample>& eval_set,
                    std::int64_t batch_size) {
    const auto& cfg = model.config();
    const std::int64_t n = static_cast<std::int64_t>(eval_set.size());
    if (n == 0) throw std::invalid_argument("evaluate: empty evaluation set");
    const std::int64_t raw = cfg.raw_len();
    auto order = identity_order(n);
    std::vector<double> ratios;
    ratios.reserve(static_cast<std::size_t>(n));
    for (std::int64_t begin = 0; begin < n; begin += batch_size) {
        const std::int64_t end = std::min(n, begin + batch_size);
        auto batch = make_batch(eval_set, order, begin, end, cfg);
        auto pred = model.forward(batch.h, batch.q_bar, batch.c_bar);
        const auto& p = pred.data();
        const auto& t = batch.h.data();
        for (std::int64_t i = 0; i < end - begin; ++i) {
            double err = 0, ref = 0;
            for (std::int64_t j = 0; j < raw; ++j) {
                const double d = static_cast<double>(p[static_cast<std::size_t>(i * raw + j)]) -
                                 static_cast<double>(t[static_cast<std::size_t>(i * raw + j)]);
                err += d * d;
                const double v = static_cast<double>(t[static_cast<std::size_t>(i * raw + j)]);
                ref += v * v;
            }
            if (ref == 0) throw std::runtime_error("evaluate: zero-energy reference channel");
            ratios.push_back(err / ref);
        }
    }
    EvalResult res;
    res.n = n;
    double sum = 0;
    for (double r : ratios) sum += r;
    res.mean_nmse_linear = sum / static_cast<double>(n);
    res.mean_nmse_db = nmse_db(res.mean_nmse_linear);
    std::sort(ratios.begin(), ratios.end());
    res.p50_db = percentile_db(ratios, 50.0);
    res.p90_db = percentile_db(std::move(ratios), 90.0);
    return res;
}

void repreprocess_covariance(std::vector<DatasetSample>& samples, double snr_db, std::uint64_t seed,
                             const PreprocessOptions& opt) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        if (s.covariance.empty())
            throw std::invalid_argument("repreprocess_covariance: sample " + std::to_string(i) +
                                        " has no raw covariance matrices (load with load_covariance)");
        Rng rng = Rng::stream(seed, 0xA0000000ULL + i);
        auto noisy = inject_noise(s.covariance, snr_db, rng);
        auto pre = preprocess(noisy, opt);
        s.q_bar_stacked = stack_real<float>(pre.q_bar);
        s.c_bar_stacked = stack_cbar<float>(pre);
        s.i_m1 = static_cast<std::uint32_t>(pre.i_m1);
        s.i_m2 = static_cast<std::uint32_t>(pre.i_m2);
    }
}

TrainResult train_model(CovNetModel<float>& model, const std::vector<DatasetSample>& train_set,
                        const std::vector<DatasetSample>& eval_set, const TrainConfig& tc,
                        const std::string& run_id, std::ostream* progress) {
    const auto& cfg = model.config();
    const std::int64_t n = static_cast<std::int64_t>(train_set.size());
    tc.validate(n);
    if (eval_set.empty()) throw std::invalid_argument("train: empty evaluation set");

    const std::int64_t flops = estimate_flops(cfg).total();
    const std::int64_t cr = codeword_len_to_cr(cfg.n_a, cfg.n_t, cfg.codeword_len);
    const std::string variant = variant_name(cfg.variant);
    const auto t0 = clk::now();

    TrainResult res;
    auto best_snap = snapshot_params(model.params());
    res.best_epoch = 0;

    auto run_eval = [&](std::int64_t epoch, double train_mse) {
        auto ev = evaluate(model, eval_set, std::min<std::int64_t>(tc.batch_size, 100));
        MetricsRow row{run_id, variant, cr, tc.covariance_snr_db, epoch, train_mse, ev.mean_nmse_db, flops,
                       elapsed_s(t0)};
        res.rows.push_back(row);
        if (ev.mean_nmse_db < res.best_eval_nmse_db) {
            res.best_eval_nmse_db = ev.mean_nmse_db;
            res.best_epoch = epoch;
            best_snap = snapshot_params(model.params());
        }
        return ev;
    };

    Adam<float> opt(static_cast<float>(tc.learning_rate));
    auto order = identity_order(n);
    std::int64_t step = 0;
    double train_mse = std::numeric_limits<double>::quiet_NaN();

    if (tc.epochs == 0) run_eval(0, train_mse);

    for (std::int64_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        if (tc.shuffle) {
            Rng rng = Rng::stream(tc.seed, 0xE7000000ULL + static_cast<std::uint64_t>(epoch));
            for (std::int64_t i = n - 1; i > 0; --i) {
                const auto j = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }
        double loss_weighted = 0;
        for (std::int64_t begin = 0; begin < n; begin += tc.batch_size) {
            const std::int64_t end = std::min(n, begin + tc.batch_size);
            auto batch = make_batch(train_set, order, begin, end, cfg);
            model.params().zero_grad();
            auto loss = ops::mse_loss(model.forward(batch.h, batch.q_bar, batch.c_bar), batch.h);
            backward(loss);
            opt.step(model.params());
            const double l = static_cast<double>(loss.scalar());
            if (!std::isfinite(l))
                throw std::runtime_error(run_id + ": training diverged, non-finite loss at step " +
                                         std::to_string(step + 1) + " (epoch " + std::to_string(epoch) + ")");
            res.step_losses.push_back(l);
            loss_weighted += l * static_cast<double>(end - begin);
            ++step;
            if (tc.eval_every_steps > 0 && step % tc.eval_every_steps == 0)
                run_eval(epoch, loss_weighted / static_cast<double>(end));
        }
        train_mse = loss_weighted / static_cast<double>(n);
        auto ev = run_eval(epoch, train_mse);
        if (progress) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "[%s] epoch %lld/%lld train_mse %.6g eval %.3f dB (best %.3f @ %lld) %.1fs\n",
                          run_id.c_str(), static_cast<long long>(epoch), static_cast<long long>(tc.epochs), train_mse,
                          ev.mean_nmse_db, res.best_eval_nmse_db, static_cast<long long>(res.best_epoch),
                          elapsed_s(t0));
            (*progress) << buf << std::flush;
        }
    }

    restore_params(model.params(), best_snap);
    res.final_train_mse = train_mse;
    res.wallclock_s = elapsed_s(t0);
    return res;
}

SweepResult sweep_cr(const std::vector<DatasetSample>& train_set, const std::vector<DatasetSample>& eval_set,
                     const ModelConfig& base_model, const TrainConfig& tc,
                     const std::vector<std::int64_t>& crs, const std::vector<Variant>& variants,
                     const std::string& out_dir, int workers, std::ostream* progress) {
    struct Cell {
        ModelConfig cfg;
        std::string run_id;
    };
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    std::vector<Cell> cells;
    for (Variant v : variants)
        for (std::int64_t cr : crs) {
            ModelConfig mc = base_model;
            mc.variant = v;
            mc.codeword_len = cr_to_codeword_len(mc.n_a, mc.n_t, cr);
            cells.push_back({std::move(mc),
                             variant_name(v) + "-cr" + std::to_string(cr) + "-s" + std::to_string(tc.seed)});
        }

    struct Slot {
        TrainResult result;
        std::string checkpoint;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(cells.size());
    std::mutex progress_mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                CovNetModel<float> model(cells[i].cfg, tc.seed);
                std::ostream* prog = progress;
                // serialize progress lines across workers
                std::ostringstream local;
                slots[i].result = train_model(model, train_set, eval_set, tc, cells[i].run_id,
                                              prog ? &local : nullptr);
                if (prog) {
                    std::lock_guard<std::mutex> lk(progress_mu);
                    (*prog) << local.str() << std::flush;
                }
                if (!out_dir.empty()) {
                    slots[i].checkpoint = out_dir + "/" + cells[i].run_id + ".cvnt";
                    save_checkpoint(model.params(), slots[i].checkpoint);
                }
            } catch (...) {
                slots[i].error = std::current_exception();
            }
        }
    };

    const int nw = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepResult out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (slots[i].error) std::rethrow_exception(slots[i].error);
        out.run_ids.push_back(cells[i].run_id);
        out.checkpoint_paths.push_back(slots[i].checkpoint);
        out.best_epochs.push_back(slots[i].result.best_epoch);
        for (auto& r : slots[i].result.rows) out.rows.push_back(std::move(r));
    }
    return out;
}

std::vector<MetricsRow> sweep_noise(CovNetModel<float>& model, std::vector<DatasetSample>& eval_set,
                                    const std::vector<double>& snrs_db, std::uint64_t seed,
                                    const std::string& run_id_base, std::int64_t checkpoint_epoch,
                                    std::int64_t batch_size, std::ostream* progress) {
    const auto& cfg = model.config();
    const std::int64_t flops = estimate_flops(cfg).total();
    const std::int64_t cr = codeword_len_to_cr(cfg.n_a, cfg.n_t, cfg.codeword_len);
    const bool uses_cov = cfg.variant != Variant::no_covariance_baseline;
    std::vector<MetricsRow> rows;
    const auto t0 = clk::now();
    for (std::size_t i = 0; i < snrs_db.size(); ++i) {
        const double snr = snrs_db[i];
        if (uses_cov) repreprocess_covariance(eval_set, snr, seed + i);
        auto ev = evaluate(model, eval_set, batch_size);
        std::string tag = "inf";
        if (!std::isinf(snr)) {
            char b[32];
            std::snprintf(b, sizeof b, "%g", snr);
            tag = b;
        }
        MetricsRow row{run_id_base + "-snr" + tag, variant_name(cfg.variant), cr, snr, checkpoint_epoch,
                       std::numeric_limits<double>::quiet_NaN(), ev.mean_nmse_db, flops, elapsed_s(t0)};
        rows.push_back(row);
        if (progress) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "[%s] cov SNR %s dB -> NMSE %.3f dB\n", row.run_id.c_str(), tag.c_str(),
                          ev.mean_nmse_db);
            (*progress) << buf << std::flush;
        }
    }
    return rows;
}

int resolve_workers(int flag_value) {
    if (const char* env = std::getenv("COVNET_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<int>(v);
    }
    return flag_value > 0 ? flag_value : 1;
}

}  // namespace covnet
