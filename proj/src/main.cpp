// covnet CLI: dataset generation, training, evaluation, sweeps, reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "covnet/config.hpp"
#include "covnet/report.hpp"
#include "covnet/train.hpp"
#include "covnet/transforms.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace covnet;

namespace {

constexpr const char* kCodeVersion = "covnet 0.1.0";

[[noreturn]] void usage_error(const std::string& msg) { throw std::invalid_argument(msg); }

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + tmp);
        f << content;
        if (!f.flush()) throw std::runtime_error("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

json snr_to_json(double v) {
    if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
    return json(v);
}

json channel_config_to_json(const ChannelConfig& c) {
    return json{{"n_tx", c.n_tx},
                {"n_sub", c.n_sub},
                {"n_delay", c.n_delay},
                {"n_paths", c.n_paths},
                {"angle_spread_deg", c.angle_spread_deg},
                {"delay_max", c.delay_max},
                {"delay_offset", c.delay_offset},
                {"snapshots_per_geometry", c.snapshots_per_geometry},
                {"seed", c.seed},
                {"uplink_downlink_freq_ratio", c.uplink_downlink_freq_ratio},
                {"delay_decay", c.delay_decay}};
}

json model_config_to_json(const ModelConfig& m) {
    json fire = json::array();
    for (const auto& f : m.fire) fire.push_back({f.squeeze, f.expand1, f.expand3});
    return json{{"n_a", m.n_a},
                {"n_t", m.n_t},
                {"n_heads", m.n_heads},
                {"codeword_len", m.codeword_len},
                {"n_encoder_blocks", m.n_encoder_blocks},
                {"n_decoder_blocks", m.n_decoder_blocks},
                {"ffn_hidden_delay", m.ffn_hidden_delay},
                {"ffn_hidden_angle", m.ffn_hidden_angle},
                {"cipn_branch_a_len", m.cipn_branch_a_len},
                {"stem_channels", m.stem_channels},
                {"fire", fire},
                {"variant", variant_name(m.variant)},
                {"use_layer_norm", m.use_layer_norm},
                {"causal_decoder_mask", m.causal_decoder_mask}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    m.n_a = j.at("n_a").get<std::int64_t>();
    m.n_t = j.at("n_t").get<std::int64_t>();
    m.n_heads = j.at("n_heads").get<std::int64_t>();
    m.codeword_len = j.at("codeword_len").get<std::int64_t>();
    m.n_encoder_blocks = j.at("n_encoder_blocks").get<std::int64_t>();
    m.n_decoder_blocks = j.at("n_decoder_blocks").get<std::int64_t>();
    m.ffn_hidden_delay = j.at("ffn_hidden_delay").get<std::int64_t>();
    m.ffn_hidden_angle = j.at("ffn_hidden_angle").get<std::int64_t>();
    m.cipn_branch_a_len = j.at("cipn_branch_a_len").get<std::int64_t>();
    m.stem_channels = j.at("stem_channels").get<std::int64_t>();
    m.fire.clear();
    for (const auto& f : j.at("fire")) m.fire.push_back({f.at(0).get<std::int64_t>(), f.at(1).get<std::int64_t>(), f.at(2).get<std::int64_t>()});
    m.variant = variant_from_name(j.at("variant").get<std::string>());
    m.use_layer_norm = j.at("use_layer_norm").get<bool>();
    m.causal_decoder_mask = j.at("causal_decoder_mask").get<bool>();
    return m;
}

json train_config_to_json(const TrainConfig& t) {
    return json{{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"seed", t.seed},
                {"eval_every_steps", t.eval_every_steps},
                {"covariance_snr_db", snr_to_json(t.covariance_snr_db)},
                {"shuffle", t.shuffle}};
}

void apply_channel_kv(const KvConfig& kv, ChannelConfig& c) {
    c.n_tx = kv_int(kv, "channel.n_tx", c.n_tx);
    c.n_sub = kv_int(kv, "channel.n_sub", c.n_sub);
    c.n_delay = kv_int(kv, "channel.n_delay", c.n_delay);
    c.n_paths = kv_int(kv, "channel.n_paths", c.n_paths);
    c.angle_spread_deg = kv_double(kv, "channel.angle_spread_deg", c.angle_spread_deg);
    c.delay_max = kv_double(kv, "channel.delay_max", c.delay_max);
    c.delay_offset = kv_double(kv, "channel.delay_offset", c.delay_offset);
    c.snapshots_per_geometry = kv_int(kv, "channel.snapshots_per_geometry", c.snapshots_per_geometry);
    c.seed = static_cast<std::uint64_t>(kv_int(kv, "channel.seed", static_cast<std::int64_t>(c.seed)));
    c.uplink_downlink_freq_ratio = kv_double(kv, "channel.uplink_downlink_freq_ratio", c.uplink_downlink_freq_ratio);
    c.delay_decay = kv_double(kv, "channel.delay_decay", c.delay_decay);
}

void apply_model_kv(const KvConfig& kv, ModelConfig& m) {
    m.n_heads = kv_int(kv, "model.n_heads", m.n_heads);
    m.n_encoder_blocks = kv_int(kv, "model.n_encoder_blocks", m.n_encoder_blocks);
    m.n_decoder_blocks = kv_int(kv, "model.n_decoder_blocks", m.n_decoder_blocks);
    m.ffn_hidden_delay = kv_int(kv, "model.ffn_hidden_delay", m.ffn_hidden_delay);
    m.ffn_hidden_angle = kv_int(kv, "model.ffn_hidden_angle", m.ffn_hidden_angle);
    m.cipn_branch_a_len = kv_int(kv, "model.cipn_branch_a_len", m.cipn_branch_a_len);
    m.stem_channels = kv_int(kv, "model.stem_channels", m.stem_channels);
    m.use_layer_norm = kv_bool(kv, "model.use_layer_norm", m.use_layer_norm);
    m.causal_decoder_mask = kv_bool(kv, "model.causal_decoder_mask", m.causal_decoder_mask);
}

void apply_train_kv(const KvConfig& kv, TrainConfig& t) {
    t.learning_rate = kv_double(kv, "train.learning_rate", t.learning_rate);
    t.batch_size = kv_int(kv, "train.batch_size", t.batch_size);
    t.epochs = kv_int(kv, "train.epochs", t.epochs);
    t.eval_every_steps = kv_int(kv, "train.eval_every_steps", t.eval_every_steps);
    t.covariance_snr_db = kv_double(kv, "train.covariance_snr_db", t.covariance_snr_db);
    t.shuffle = kv_bool(kv, "train.shuffle", t.shuffle);
}

std::string iso_time_utc(std::time_t t) {
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void refuse_existing(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        usage_error(path + " already exists; pass --force to overwrite");
}

struct SplitSpec {
    std::int64_t train_n = 2000, eval_n = 500;
};

// Training samples come first in the file; evaluation follows (disjoint
// geometry indices, hence disjoint scatterer draws).
void load_split(const std::string& data, const SplitSpec& split, bool cov_for_eval,
                std::vector<DatasetSample>& train_set, std::vector<DatasetSample>& eval_set) {
    LoadOptions lo;
    lo.max_samples = split.train_n;
    train_set = load_dataset(data, lo).samples;
    LoadOptions le;
    le.skip_samples = split.train_n;
    le.max_samples = split.eval_n;
    le.load_covariance = cov_for_eval;
    eval_set = load_dataset(data, le).samples;
    if (static_cast<std::int64_t>(train_set.size()) != split.train_n ||
        static_cast<std::int64_t>(eval_set.size()) != split.eval_n)
        usage_error("dataset too small: need " + std::to_string(split.train_n + split.eval_n) + " samples, file has " +
                    std::to_string(train_set.size() + eval_set.size()) + " usable");
}

// ---- subcommand payloads ----

struct GenDataArgs {
    std::string config, out;
    std::int64_t samples = 2500;
    std::uint64_t seed = 0;
    std::uint32_t version = kDatasetVersionPre;
    bool instantaneous_ranking = false;
    bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    ChannelConfig cfg;
    if (!a.config.empty()) apply_channel_kv(parse_kv_config(a.config), cfg);
    cfg.seed = a.seed;
    cfg.validate();
    refuse_existing(a.out, a.force);
    PreprocessOptions pre;
    pre.instantaneous_power = a.instantaneous_ranking;
    auto res = generate_dataset(cfg, a.samples, a.out, a.version, pre);
    write_dataset_manifest(a.out + ".manifest.json", cfg, a.samples, res);
    std::printf("wrote %s: %lld samples, %llu bytes, fnv1a64=%016llx\n", a.out.c_str(),
                static_cast<long long>(a.samples), static_cast<unsigned long long>(res.file_bytes),
                static_cast<unsigned long long>(res.file_hash));
    std::printf("truncation energy fraction (first %lld delay rows): %.4f\n", static_cast<long long>(cfg.n_delay),
                res.truncation_energy);
    return 0;
}

struct TrainArgs {
    std::string data, out, config;
    std::string variant = "covnet";
    std::int64_t cr = 0;
    TrainConfig tc;
    SplitSpec split;
    bool force = false;
    // which train flags the user actually passed (flags override file values)
    bool epochs_set = false, lr_set = false, bs_set = false, ee_set = false, snr_set = false;
};

// Precedence: command defaults < config file < explicit flags.
void merge_train_kv(const KvConfig& kv, TrainConfig& tc, bool epochs_set, bool lr_set, bool bs_set, bool ee_set,
                    bool snr_set) {
    TrainConfig file = tc;
    apply_train_kv(kv, file);
    if (!epochs_set) tc.epochs = file.epochs;
    if (!lr_set) tc.learning_rate = file.learning_rate;
    if (!bs_set) tc.batch_size = file.batch_size;
    if (!ee_set) tc.eval_every_steps = file.eval_every_steps;
    if (!snr_set) tc.covariance_snr_db = file.covariance_snr_db;
    tc.shuffle = file.shuffle;
}

json make_run_manifest(const std::string& command, const TrainArgs& a, const ModelConfig& mc,
                       std::uint64_t data_hash, const json& artifacts) {
    return json{{"command", command},
                {"run_id", a.variant + "-cr" + std::to_string(a.cr) + "-s" + std::to_string(a.tc.seed)},
                {"code_version", kCodeVersion},
                {"created_unix_s", static_cast<std::int64_t>(std::time(nullptr))},
                {"created", iso_time_utc(std::time(nullptr))},
                {"seed", a.tc.seed},
                {"dataset",
                 json{{"path", a.data},
                      {"hash_fnv1a64", data_hash},
                      {"train_samples", a.split.train_n},
                      {"eval_samples", a.split.eval_n}}},
                {"m", mc.codeword_len},
                {"model", model_config_to_json(mc)},
                {"train_config", train_config_to_json(a.tc)},
                {"artifacts", artifacts}};
}

int cmd_train(const TrainArgs& a_in) {
    TrainArgs a = a_in;
    auto header = read_dataset_header(a.data);
    ModelConfig mc;
    mc.n_a = header.n_a;
    mc.n_t = header.n_t;
    mc.variant = variant_from_name(a.variant);
    if (!a.config.empty()) {
        auto kv = parse_kv_config(a.config);
        apply_model_kv(kv, mc);
        merge_train_kv(kv, a.tc, a.epochs_set, a.lr_set, a.bs_set, a.ee_set, a.snr_set);
    }
    mc.codeword_len = cr_to_codeword_len(mc.n_a, mc.n_t, a.cr);
    mc.validate();

    fs::create_directories(a.out);
    const std::string manifest_path = a.out + "/manifest.json";
    refuse_existing(manifest_path, a.force);

    const bool train_on_noisy = !std::isinf(a.tc.covariance_snr_db);
    std::vector<DatasetSample> train_set, eval_set;
    load_split(a.data, a.split, train_on_noisy, train_set, eval_set);
    if (train_on_noisy) {
        // the robustness ablation: preprocessing sees noisy C_n during training
        LoadOptions lo;
        lo.max_samples = a.split.train_n;
        lo.load_covariance = true;
        train_set = load_dataset(a.data, lo).samples;
        repreprocess_covariance(train_set, a.tc.covariance_snr_db, a.tc.seed ^ 0x7261696eULL);
        repreprocess_covariance(eval_set, a.tc.covariance_snr_db, a.tc.seed ^ 0x6576616cULL);
    }

    const std::uint64_t data_hash = hash_file(a.data);
    const std::string run_id = a.variant + "-cr" + std::to_string(a.cr) + "-s" + std::to_string(a.tc.seed);
    json artifacts{{"checkpoint", a.out + "/checkpoint.cvnt"}, {"metrics", a.out + "/metrics.csv"}};
    write_text_atomic(manifest_path, make_run_manifest("train", a, mc, data_hash, artifacts).dump(2) + "\n");

    CovNetModel<float> model(mc, a.tc.seed);
    std::printf("run %s: M=%lld, params=%lld, est. flops/sample=%lld\n", run_id.c_str(),
                static_cast<long long>(mc.codeword_len), static_cast<long long>(model.params().total_scalars()),
                static_cast<long long>(estimate_flops(mc).total()));
    auto result = train_model(model, train_set, eval_set, a.tc, run_id, &std::cout);

    save_checkpoint(model.params(), a.out + "/checkpoint.cvnt");
    write_metrics_csv(a.out + "/metrics.csv", result.rows);
    auto manifest = make_run_manifest("train", a, mc, data_hash, artifacts);
    manifest["results"] = json{{"run_id", run_id},
                               {"best_epoch", result.best_epoch},
                               {"best_eval_nmse_db", result.best_eval_nmse_db},
                               {"final_train_mse", result.final_train_mse},
                               {"wallclock_s", result.wallclock_s}};
    write_text_atomic(manifest_path, manifest.dump(2) + "\n");
    std::printf("best eval NMSE %.3f dB at epoch %lld; artifacts in %s\n", result.best_eval_nmse_db,
                static_cast<long long>(result.best_epoch), a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string run, data;
    double cov_snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t noise_seed = 1;
    SplitSpec split;
};

int cmd_eval(const EvalArgs& a) {
    std::ifstream mf(a.run + "/manifest.json");
    if (!mf) usage_error("no manifest.json under " + a.run);
    json manifest = json::parse(mf);
    ModelConfig mc = model_config_from_json(manifest.at("model"));
    const std::string data = a.data.empty() ? manifest.at("dataset").at("path").get<std::string>() : a.data;

    const bool noisy = !std::isinf(a.cov_snr_db) && mc.variant != Variant::no_covariance_baseline;
    LoadOptions le;
    le.skip_samples = a.split.train_n;
    le.max_samples = a.split.eval_n;
    le.load_covariance = noisy;
    auto eval_set = load_dataset(data, le).samples;
    if (eval_set.empty()) usage_error("no evaluation samples in " + data);
    if (noisy) repreprocess_covariance(eval_set, a.cov_snr_db, a.noise_seed);

    CovNetModel<float> model(mc, 0);
    load_checkpoint(model.params(), a.run + "/checkpoint.cvnt");
    auto ev = evaluate(model, eval_set);
    std::printf("eval %s: n=%lld mean NMSE %.4f dB (linear %.6g), p50 %.4f dB, p90 %.4f dB\n", a.run.c_str(),
                static_cast<long long>(ev.n), ev.mean_nmse_db, ev.mean_nmse_linear, ev.p50_db, ev.p90_db);
    return 0;
}

struct SweepCrArgs {
    std::string data, out, config;
    std::vector<std::int64_t> crs = {32, 64, 128, 256};
    std::vector<std::string> variants = {"covnet", "no_covariance_baseline", "modified_covnet"};
    TrainConfig tc;
    SplitSpec split;
    int workers = 1;
    bool strict = false;
    bool force = false;
    bool epochs_set = false, lr_set = false, bs_set = false;
};

int cmd_sweep_cr(const SweepCrArgs& a) {
    auto header = read_dataset_header(a.data);
    ModelConfig base;
    base.n_a = header.n_a;
    base.n_t = header.n_t;
    TrainConfig tc = a.tc;
    if (!a.config.empty()) {
        auto kv = parse_kv_config(a.config);
        apply_model_kv(kv, base);
        merge_train_kv(kv, tc, a.epochs_set, a.lr_set, a.bs_set, true, true);
    }
    std::vector<Variant> variants;
    for (const auto& v : a.variants) variants.push_back(variant_from_name(v));

    fs::create_directories(a.out);
    const std::string manifest_path = a.out + "/manifest.json";
    refuse_existing(manifest_path, a.force);

    std::vector<DatasetSample> train_set, eval_set;
    load_split(a.data, a.split, false, train_set, eval_set);
    const std::uint64_t data_hash = hash_file(a.data);

    json manifest{{"command", "sweep-cr"},
                  {"code_version", kCodeVersion},
                  {"created_unix_s", static_cast<std::int64_t>(std::time(nullptr))},
                  {"created", iso_time_utc(std::time(nullptr))},
                  {"seed", tc.seed},
                  {"dataset",
                   json{{"path", a.data},
                        {"hash_fnv1a64", data_hash},
                        {"train_samples", a.split.train_n},
                        {"eval_samples", a.split.eval_n}}},
                  {"crs", a.crs},
                  {"variants", a.variants},
                  {"train_config", train_config_to_json(tc)},
                  {"artifacts", json{{"metrics", a.out + "/metrics.csv"}}}};
    write_text_atomic(manifest_path, manifest.dump(2) + "\n");

    const int workers = resolve_workers(a.workers);
    std::printf("sweep-cr: %zu cells, %d worker(s)\n", a.crs.size() * variants.size(), workers);
    auto sweep = sweep_cr(train_set, eval_set, base, tc, a.crs, variants, a.out, workers, &std::cout);
    write_metrics_csv(a.out + "/metrics.csv", sweep.rows);

    json runs = json::array();
    for (std::size_t i = 0; i < sweep.run_ids.size(); ++i) {
        ModelConfig mc = base;
        const std::size_t vi = i / a.crs.size(), ci = i % a.crs.size();
        mc.variant = variants[vi];
        mc.codeword_len = cr_to_codeword_len(mc.n_a, mc.n_t, a.crs[ci]);
        runs.push_back(json{{"run_id", sweep.run_ids[i]},
                            {"checkpoint", sweep.checkpoint_paths[i]},
                            {"best_epoch", sweep.best_epochs[i]},
                            {"model", model_config_to_json(mc)}});
    }
    manifest["runs"] = runs;
    write_text_atomic(manifest_path, manifest.dump(2) + "\n");

    // qualitative orderings from the results table
    auto best = summarize(sweep.rows);
    auto lookup = [&](const std::string& variant, std::int64_t cr) -> const SummaryRow* {
        for (const auto& r : best)
            if (r.variant == variant && r.cr == cr) return &r;
        return nullptr;
    };
    bool ok = true;
    auto check = [&](const std::string& what, bool cond) {
        std::printf("ordering %-52s %s\n", what.c_str(), cond ? "PASS" : "FAIL");
        ok = ok && cond;
    };
    const auto* cov_hi = lookup("covnet", a.crs.back());
    const auto* base_hi = lookup("no_covariance_baseline", a.crs.back());
    const auto* mod_hi = lookup("modified_covnet", a.crs.back());
    const auto* cov_lo = lookup("covnet", a.crs.front());
    const auto* base_lo = lookup("no_covariance_baseline", a.crs.front());
    if (cov_hi && base_hi)
        check("covnet < baseline at highest CR", cov_hi->best_nmse_db < base_hi->best_nmse_db);
    if (cov_hi && mod_hi)
        check("covnet < modified_covnet at highest CR", cov_hi->best_nmse_db < mod_hi->best_nmse_db);
    if (cov_hi && cov_lo && base_hi && base_lo)
        check("covnet degrades less than baseline across CR",
              cov_hi->best_nmse_db - cov_lo->best_nmse_db < base_hi->best_nmse_db - base_lo->best_nmse_db);
    for (const auto& r : best)
        std::printf("  %-28s cr %4lld  best %8.3f dB  flops %lld\n", r.variant.c_str(), static_cast<long long>(r.cr),
                    r.best_nmse_db, static_cast<long long>(r.flops_total));
    if (a.strict && !ok) throw std::runtime_error("sweep-cr: qualitative ordering check failed");
    return 0;
}

struct SweepNoiseArgs {
    std::string sweep_dir, data, out;
    std::vector<std::string> run_ids;
    std::vector<std::string> snrs = {"0", "5", "10", "inf"};
    std::uint64_t seed = 1;
    SplitSpec split;
    bool force = false;
};

int cmd_sweep_noise(const SweepNoiseArgs& a) {
    std::ifstream mf(a.sweep_dir + "/manifest.json");
    if (!mf) usage_error("no manifest.json under " + a.sweep_dir);
    json manifest = json::parse(mf);
    if (!manifest.contains("runs")) usage_error(a.sweep_dir + ": manifest has no completed runs");

    std::vector<double> snrs;
    for (const auto& s : a.snrs) {
        if (s == "inf") {
            snrs.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0') usage_error("bad SNR value '" + s + "'");
        snrs.push_back(v);
    }
    const std::string out = a.out.empty() ? a.sweep_dir + "/noise_metrics.csv" : a.out;
    refuse_existing(out, a.force);

    const std::string data = a.data.empty() ? manifest.at("dataset").at("path").get<std::string>() : a.data;
    LoadOptions le;
    le.skip_samples = a.split.train_n;
    le.max_samples = a.split.eval_n;
    le.load_covariance = true;
    auto eval_set = load_dataset(data, le).samples;
    if (eval_set.empty()) usage_error("no evaluation samples in " + data);

    std::vector<MetricsRow> rows;
    for (const auto& run : manifest.at("runs")) {
        const std::string run_id = run.at("run_id").get<std::string>();
        if (!a.run_ids.empty() &&
            std::find(a.run_ids.begin(), a.run_ids.end(), run_id) == a.run_ids.end())
            continue;
        ModelConfig mc = model_config_from_json(run.at("model"));
        CovNetModel<float> model(mc, 0);
        load_checkpoint(model.params(), run.at("checkpoint").get<std::string>());
        auto r = sweep_noise(model, eval_set, snrs, a.seed, "noise-" + run_id,
                             run.at("best_epoch").get<std::int64_t>(), 100, &std::cout);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    if (rows.empty()) usage_error("no runs matched the requested run ids");
    write_metrics_csv(out, rows);
    std::printf("wrote %s (%zu rows)\n", out.c_str(), rows.size());
    return 0;
}

struct ReportArgs {
    std::vector<std::string> metrics;
    std::string out;
    bool force = false;
};

int cmd_report(const ReportArgs& a) {
    auto rows = merge_metrics(a.metrics);
    if (rows.empty()) throw std::runtime_error("no rows in the given metrics files");
    fs::create_directories(a.out);
    refuse_existing(a.out + "/summary.csv", a.force);
    write_metrics_csv(a.out + "/metrics_merged.csv", rows);
    write_summary_csv(a.out + "/summary.csv", summarize(rows));
    write_text_atomic(a.out + "/nmse_vs_cr.svg", plot_nmse_vs_cr(rows));
    write_text_atomic(a.out + "/nmse_vs_snr.svg", plot_nmse_vs_snr(rows));
    std::printf("report: %zu rows merged -> %s/{metrics_merged.csv,summary.csv,nmse_vs_cr.svg,nmse_vs_snr.svg}\n",
                rows.size(), a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"covariance-assisted CSI feedback: data generation, training, sweeps, reports"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic channel dataset (CVDS)");
    gen->add_option("--config", gd.config, "config file ([channel] section)");
    gen->add_option("--out", gd.out, "output dataset path")->required();
    gen->add_option("--samples", gd.samples, "number of samples");
    gen->add_option("--seed", gd.seed, "geometry seed");
    gen->add_option("--version", gd.version, "dataset format version (1 raw, 2 preprocessed)")
        ->check(CLI::IsMember({1, 2}));
    gen->add_flag("--instantaneous-ranking", gd.instantaneous_ranking,
                  "rank delay rows by held-out snapshot power instead of trace");
    gen->add_flag("--force", gd.force, "overwrite existing outputs");

    TrainArgs tr;
    tr.tc.epochs = 40;
    tr.tc.batch_size = 50;
    tr.tc.learning_rate = 1e-3;
    auto* train = app.add_subcommand("train", "train one model");
    train->add_option("--data", tr.data, "CVDS dataset")->required();
    train->add_option("--cr", tr.cr, "compression ratio (2*N_a*N_t / M)")->required();
    train->add_option("--variant", tr.variant, "covnet | no_covariance_baseline | modified_covnet");
    auto* tr_epochs = train->add_option("--epochs", tr.tc.epochs, "training epochs");
    train->add_option("--seed", tr.tc.seed, "init/shuffle seed");
    train->add_option("--out", tr.out, "output directory")->required();
    train->add_option("--config", tr.config, "config file ([model]/[train] sections)");
    auto* tr_lr = train->add_option("--lr", tr.tc.learning_rate, "Adam learning rate");
    auto* tr_bs = train->add_option("--batch-size", tr.tc.batch_size, "batch size");
    auto* tr_ee = train->add_option("--eval-every", tr.tc.eval_every_steps, "evaluate every N steps (0: per epoch)");
    auto* tr_snr = train->add_option("--cov-snr-db", tr.tc.covariance_snr_db,
                                     "train-time covariance noise SNR (default: clean)");
    train->add_option("--train-samples", tr.split.train_n, "leading samples used for training");
    train->add_option("--eval-samples", tr.split.eval_n, "samples after the training block used for eval");
    train->add_flag("--force", tr.force, "overwrite an existing run directory");

    EvalArgs ev;
    auto* evalc = app.add_subcommand("eval", "evaluate a trained run directory");
    evalc->add_option("--run", ev.run, "run directory (manifest.json + checkpoint.cvnt)")->required();
    evalc->add_option("--data", ev.data, "dataset override (default: manifest's path)");
    evalc->add_option("--cov-snr-db", ev.cov_snr_db, "covariance noise SNR in dB (default: clean)");
    evalc->add_option("--noise-seed", ev.noise_seed, "noise draw seed");
    evalc->add_option("--train-samples", ev.split.train_n, "training block size to skip");
    evalc->add_option("--eval-samples", ev.split.eval_n, "evaluation sample count");

    SweepCrArgs sc;
    sc.tc.epochs = 40;
    sc.tc.batch_size = 50;
    sc.tc.learning_rate = 1e-3;
    auto* sweepcr = app.add_subcommand("sweep-cr", "train the CR x variant grid");
    sweepcr->add_option("--data", sc.data, "CVDS dataset")->required();
    sweepcr->add_option("--out", sc.out, "output directory")->required();
    sweepcr->add_option("--crs", sc.crs, "compression ratios")->delimiter(',');
    sweepcr->add_option("--variants", sc.variants, "variants")->delimiter(',');
    sweepcr->add_option("--config", sc.config, "config file ([model]/[train] sections)");
    auto* sc_epochs = sweepcr->add_option("--epochs", sc.tc.epochs, "training epochs");
    sweepcr->add_option("--seed", sc.tc.seed, "shared seed for every cell");
    auto* sc_lr = sweepcr->add_option("--lr", sc.tc.learning_rate, "Adam learning rate");
    auto* sc_bs = sweepcr->add_option("--batch-size", sc.tc.batch_size, "batch size");
    sweepcr->add_option("--train-samples", sc.split.train_n, "leading samples used for training");
    sweepcr->add_option("--eval-samples", sc.split.eval_n, "samples after the training block used for eval");
    sweepcr->add_option("--workers", sc.workers, "parallel cells (COVNET_THREADS overrides)");
    sweepcr->add_flag("--strict", sc.strict, "fail (exit 1) when qualitative orderings do not hold");
    sweepcr->add_flag("--force", sc.force, "overwrite an existing sweep directory");

    SweepNoiseArgs sn;
    auto* sweepn = app.add_subcommand("sweep-noise", "evaluate sweep checkpoints under covariance noise");
    sweepn->add_option("--sweep", sn.sweep_dir, "sweep-cr output directory")->required();
    sweepn->add_option("--data", sn.data, "dataset override (default: manifest's path)");
    sweepn->add_option("--out", sn.out, "metrics CSV (default: <sweep>/noise_metrics.csv)");
    sweepn->add_option("--run-id", sn.run_ids, "restrict to these run ids (repeatable)");
    sweepn->add_option("--snrs", sn.snrs, "SNR grid in dB; 'inf' = clean")->delimiter(',');
    sweepn->add_option("--seed", sn.seed, "noise draw seed");
    sweepn->add_option("--train-samples", sn.split.train_n, "training block size to skip");
    sweepn->add_option("--eval-samples", sn.split.eval_n, "evaluation sample count");
    sweepn->add_flag("--force", sn.force, "overwrite an existing metrics file");

    ReportArgs rp;
    auto* report = app.add_subcommand("report", "merge metrics and emit summary CSV + SVG plots");
    report->add_option("--metrics", rp.metrics, "metrics CSV files (repeatable)")->required();
    report->add_option("--out", rp.out, "output directory")->required();
    report->add_flag("--force", rp.force, "overwrite existing report files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(gen)) return cmd_gen_data(gd);
        if (app.got_subcommand(train)) {
            tr.epochs_set = tr_epochs->count() > 0;
            tr.lr_set = tr_lr->count() > 0;
            tr.bs_set = tr_bs->count() > 0;
            tr.ee_set = tr_ee->count() > 0;
            tr.snr_set = tr_snr->count() > 0;
            return cmd_train(tr);
        }
        if (app.got_subcommand(evalc)) return cmd_eval(ev);
        if (app.got_subcommand(sweepcr)) {
            sc.epochs_set = sc_epochs->count() > 0;
            sc.lr_set = sc_lr->count() > 0;
            sc.bs_set = sc_bs->count() > 0;
            return cmd_sweep_cr(sc);
        }
        if (app.got_subcommand(sweepn)) return cmd_sweep_noise(sn);
        if (app.got_subcommand(report)) return cmd_report(rp);
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
