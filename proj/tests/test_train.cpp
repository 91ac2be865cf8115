#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "covnet/report.hpp"
#include "covnet/train.hpp"
#include "covnet/transforms.hpp"

using namespace covnet;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Fixture {
    std::filesystem::path dir;
    std::vector<DatasetSample> train, eval;
    ModelConfig mc;

    Fixture() {
        dir = std::filesystem::temp_directory_path() / ("covnet_train_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);

        ChannelConfig cc;
        cc.n_tx = 8;
        cc.n_sub = 32;
        cc.n_delay = 8;
        cc.n_paths = 3;
        cc.delay_max = 4.0;
        cc.delay_offset = 2.0;
        cc.snapshots_per_geometry = 6;
        cc.seed = 1717;
        const auto path = (dir / "train_test.cvds").string();
        generate_dataset(cc, 22, path);

        LoadOptions lo;
        lo.load_covariance = true;
        lo.max_samples = 16;
        train = load_dataset(path, lo).samples;
        lo.max_samples = -1;
        lo.skip_samples = 16;
        eval = load_dataset(path, lo).samples;

        mc.n_a = 8;
        mc.n_t = 8;
        mc.n_heads = 2;
        mc.codeword_len = 16;
        mc.n_encoder_blocks = 1;
        mc.n_decoder_blocks = 1;
        mc.ffn_hidden_delay = 16;
        mc.ffn_hidden_angle = 16;
        mc.cipn_branch_a_len = 16;
        mc.fire = {{2, 4, 4}};
    }
    ~Fixture() { std::filesystem::remove_all(dir); }

    TrainConfig tc() const {
        TrainConfig t;
        t.learning_rate = 1e-3;
        t.batch_size = 8;
        t.epochs = 2;
        t.seed = 5;
        return t;
    }

    std::string file(const std::string& name) const { return (dir / name).string(); }
};

Tensor<float> sample_tensor(const std::vector<float>& v, Shape shape) {
    return Tensor<float>::from_data(std::move(shape), v);
}

}  // namespace

TEST_CASE("training is bitwise deterministic in (seed, config)") {
    Fixture fx;
    CovNetModel<float> a(fx.mc, 77), b(fx.mc, 77);
    auto ra = train_model(a, fx.train, fx.eval, fx.tc(), "det-a");
    auto rb = train_model(b, fx.train, fx.eval, fx.tc(), "det-b");

    REQUIRE(ra.rows.size() == rb.rows.size());
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        CHECK(ra.rows[i].eval_nmse_db == rb.rows[i].eval_nmse_db);
        CHECK(ra.rows[i].train_mse == rb.rows[i].train_mse);
        CHECK(ra.rows[i].epoch == rb.rows[i].epoch);
    }
    CHECK(ra.step_losses == rb.step_losses);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params().tensor(i).data() == b.params().tensor(i).data());

    // training actually changed something
    CovNetModel<float> fresh(fx.mc, 77);
    bool moved = false;
    for (std::size_t i = 0; i < a.params().size(); ++i)
        if (a.params().tensor(i).data() != fresh.params().tensor(i).data()) moved = true;
    CHECK(moved);
}

TEST_CASE("row metadata comes from the model and run id") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 7);
    auto res = train_model(m, fx.train, fx.eval, fx.tc(), "meta-run");
    REQUIRE(res.rows.size() == 2);  // one eval per epoch
    const auto want_flops = estimate_flops(fx.mc).total();
    for (const auto& r : res.rows) {
        CHECK(r.run_id == "meta-run");
        CHECK(r.variant == "covnet");
        CHECK(r.cr == codeword_len_to_cr(8, 8, 16));
        CHECK(r.cov_snr_db == kInf);
        CHECK(r.flops_total == want_flops);
        CHECK(std::isfinite(r.eval_nmse_db));
        CHECK(r.wallclock_s >= 0);
    }
    CHECK(res.rows[0].epoch == 1);
    CHECK(res.rows[1].epoch == 2);
    CHECK(res.final_train_mse == res.rows[1].train_mse);
}

TEST_CASE("zero learning rate is a no-op on the parameters") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 13);
    auto before = evaluate(m, fx.eval);
    auto tc = fx.tc();
    tc.learning_rate = 0.0;
    auto res = train_model(m, fx.train, fx.eval, tc, "lr0");
    for (const auto& r : res.rows) CHECK(r.eval_nmse_db == before.mean_nmse_db);
    CovNetModel<float> fresh(fx.mc, 13);
    for (std::size_t i = 0; i < m.params().size(); ++i)
        CHECK(m.params().tensor(i).data() == fresh.params().tensor(i).data());
}

TEST_CASE("epochs=0 makes a single untrained evaluation row") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 19);
    auto tc = fx.tc();
    tc.epochs = 0;
    auto res = train_model(m, fx.train, fx.eval, tc, "eval-only");
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].epoch == 0);
    CHECK(std::isnan(res.rows[0].train_mse));
    CHECK(std::isfinite(res.rows[0].eval_nmse_db));
    CHECK(res.best_epoch == 0);
    CHECK(res.step_losses.empty());
}

TEST_CASE("evaluate matches a per-sample oracle and is batch-size invariant") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 23);
    auto ev1 = evaluate(m, fx.eval, 1);
    auto ev4 = evaluate(m, fx.eval, 4);
    CHECK(ev1.mean_nmse_db == ev4.mean_nmse_db);
    CHECK(ev1.p50_db == ev4.p50_db);
    CHECK(ev1.p90_db == ev4.p90_db);
    CHECK(ev1.n == std::int64_t(fx.eval.size()));

    double mean_ratio = 0;
    for (const auto& s : fx.eval) {
        auto h = sample_tensor(s.h_stacked, {1, 16, 8});
        auto q = sample_tensor(s.q_bar_stacked, {1, 16, 8});
        auto c = sample_tensor(s.c_bar_stacked, {1, 4, 8, 8});
        auto out = m.forward(h, q, c);
        double err = 0, ref = 0;
        for (std::size_t i = 0; i < s.h_stacked.size(); ++i) {
            const double d = double(out.data()[i]) - double(s.h_stacked[i]);
            err += d * d;
            ref += double(s.h_stacked[i]) * double(s.h_stacked[i]);
        }
        mean_ratio += err / ref;
    }
    mean_ratio /= double(fx.eval.size());
    CHECK(ev4.mean_nmse_linear == doctest::Approx(mean_ratio).epsilon(1e-12));
    CHECK(ev4.mean_nmse_db == doctest::Approx(10.0 * std::log10(mean_ratio)).epsilon(1e-12));
}

TEST_CASE("the best evaluation snapshot is restored on return") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 29);
    auto tc = fx.tc();
    tc.epochs = 3;
    auto res = train_model(m, fx.train, fx.eval, tc, "best");
    double best = kInf;
    for (const auto& r : res.rows) best = std::min(best, r.eval_nmse_db);
    CHECK(res.best_eval_nmse_db == best);
    CHECK(evaluate(m, fx.eval, tc.batch_size > 100 ? 100 : tc.batch_size).mean_nmse_db == best);
}

TEST_CASE("non-finite loss aborts training with a clear error") {
    Fixture fx;
    CovNetModel<float> m(fx.mc, 31);
    auto& w = m.params().tensor(0).mutable_data();
    w[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(train_model(m, fx.train, fx.eval, fx.tc(), "nan-run"), std::runtime_error);
}

TEST_CASE("train config validation") {
    Fixture fx;
    auto tc = fx.tc();
    tc.batch_size = 100;  // > 16 training samples
    CHECK_THROWS_AS(tc.validate(16), std::invalid_argument);
    tc = fx.tc();
    tc.epochs = -1;
    CHECK_THROWS_AS(tc.validate(16), std::invalid_argument);
    tc = fx.tc();
    tc.learning_rate = -1e-3;
    CHECK_THROWS_AS(tc.validate(16), std::invalid_argument);
    CHECK_NOTHROW(fx.tc().validate(16));
}

TEST_CASE("repreprocess_covariance is deterministic and honors the inf sentinel") {
    Fixture fx;
    auto a = fx.eval, b = fx.eval, c = fx.eval;
    repreprocess_covariance(a, 5.0, 909);
    repreprocess_covariance(b, 5.0, 909);
    repreprocess_covariance(c, 5.0, 910);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].q_bar_stacked == b[i].q_bar_stacked);
        CHECK(a[i].c_bar_stacked == b[i].c_bar_stacked);
        CHECK(a[i].i_m1 == b[i].i_m1);
        if (a[i].q_bar_stacked != c[i].q_bar_stacked) differs = true;
        if (a[i].q_bar_stacked != fx.eval[i].q_bar_stacked) CHECK(true);
    }
    CHECK(differs);

    // inf leaves the covariance untouched: the rebuilt features match the
    // stored ones up to the f32 round-trip of the covariance block
    auto clean = fx.eval;
    repreprocess_covariance(clean, kInf, 909);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        REQUIRE(clean[i].q_bar_stacked.size() == fx.eval[i].q_bar_stacked.size());
        for (std::size_t k = 0; k < clean[i].q_bar_stacked.size(); ++k)
            CHECK(std::abs(clean[i].q_bar_stacked[k] - fx.eval[i].q_bar_stacked[k]) < 1e-3);
        CHECK(clean[i].i_m1 == fx.eval[i].i_m1);
        CHECK(clean[i].i_m2 == fx.eval[i].i_m2);
    }

    // raw covariances are required
    auto no_cov = fx.eval;
    for (auto& s : no_cov) s.covariance.clear();
    CHECK_THROWS_AS(repreprocess_covariance(no_cov, 5.0, 1), std::invalid_argument);
}

TEST_CASE("noise sweep: baseline is flat, inf reproduces the clean path") {
    Fixture fx;
    auto base_cfg = fx.mc;
    base_cfg.variant = Variant::no_covariance_baseline;
    CovNetModel<float> base(base_cfg, 37);
    auto eval_copy = fx.eval;
    auto rows = sweep_noise(base, eval_copy, {0.0, 5.0, kInf}, 11, "base-cr8-s11", 4);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].eval_nmse_db == rows[1].eval_nmse_db);
    CHECK(rows[1].eval_nmse_db == rows[2].eval_nmse_db);
    CHECK(rows[0].run_id == "base-cr8-s11-snr0");
    CHECK(rows[1].run_id == "base-cr8-s11-snr5");
    CHECK(rows[2].run_id == "base-cr8-s11-snrinf");
    for (const auto& r : rows) {
        CHECK(r.epoch == 4);
        CHECK(std::isnan(r.train_mse));
        CHECK(r.variant == "no_covariance_baseline");
    }
    CHECK(rows[0].cov_snr_db == 0.0);
    CHECK(rows[2].cov_snr_db == kInf);

    CovNetModel<float> cov(fx.mc, 37);
    auto eval2 = fx.eval;
    auto cov_rows = sweep_noise(cov, eval2, {kInf}, 11, "cov", 0);
    auto clean = evaluate(cov, eval2);  // eval2 now holds the repreprocessed clean features
    CHECK(cov_rows[0].eval_nmse_db == clean.mean_nmse_db);

    // finite noise must change a covariance-consuming model's score
    auto eval3 = fx.eval;
    auto noisy_rows = sweep_noise(cov, eval3, {-10.0}, 11, "cov", 0);
    CHECK(noisy_rows[0].eval_nmse_db != cov_rows[0].eval_nmse_db);
}

TEST_CASE("metrics CSV round-trips doubles and special values") {
    Fixture fx;
    std::vector<MetricsRow> rows;
    rows.push_back({"r1", "covnet", 256, kInf, 1, 0.123456789012345678, -12.75, 1234567, 1.5});
    rows.push_back({"r1", "covnet", 256, 0.0, 2, std::numeric_limits<double>::quiet_NaN(), kNmseNegInfDb, 1234567, 2.5});
    rows.push_back({"r2", "no_covariance_baseline", 32, -3.5, 7, 1e-300, 0.0, 42, 0.0});
    const auto path = fx.file("m.csv");
    write_metrics_csv(path, rows);

    auto back = read_metrics_csv(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].run_id == rows[i].run_id);
        CHECK(back[i].variant == rows[i].variant);
        CHECK(back[i].cr == rows[i].cr);
        CHECK(back[i].epoch == rows[i].epoch);
        CHECK(back[i].flops_total == rows[i].flops_total);
        CHECK(back[i].wallclock_s == rows[i].wallclock_s);
        if (std::isnan(rows[i].train_mse))
            CHECK(std::isnan(back[i].train_mse));
        else
            CHECK(back[i].train_mse == rows[i].train_mse);
        CHECK(back[i].eval_nmse_db == rows[i].eval_nmse_db);
        CHECK(back[i].cov_snr_db == rows[i].cov_snr_db);
    }

    // header line is pinned
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == kMetricsHeader);
}

TEST_CASE("malformed metrics files are rejected with the offending row") {
    Fixture fx;
    const auto path = fx.file("bad.csv");
    {
        std::ofstream f(path);
        f << kMetricsHeader << "\n";
        f << "r1,covnet,256,inf,1,0.5,-10,100,1\n";
        f << "r2,covnet,256,inf,not_an_int,0.5,-10,100,1\n";
    }
    try {
        read_metrics_csv(path);
        FAIL("expected a parse error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    const auto bad_header = fx.file("bad_header.csv");
    {
        std::ofstream f(bad_header);
        f << "run,var\nr1,covnet\n";
    }
    CHECK_THROWS(read_metrics_csv(bad_header));

    const auto nan_eval = fx.file("nan_eval.csv");
    {
        std::ofstream f(nan_eval);
        f << kMetricsHeader << "\n";
        f << "r1,covnet,256,inf,1,0.5,nan,100,1\n";
    }
    CHECK_THROWS(read_metrics_csv(nan_eval));

    CHECK_THROWS(read_metrics_csv(fx.file("missing.csv")));
}

TEST_CASE("merging metrics lets the first file shadow repeated run ids") {
    Fixture fx;
    std::vector<MetricsRow> f1 = {
        {"shared", "covnet", 64, kInf, 1, 0.5, -10.0, 10, 1.0},
        {"shared", "covnet", 64, kInf, 2, 0.4, -11.0, 10, 2.0},
        {"only1", "covnet", 32, kInf, 1, 0.3, -9.0, 10, 1.0},
    };
    std::vector<MetricsRow> f2 = {
        {"shared", "covnet", 64, kInf, 1, 9.9, -1.0, 10, 1.0},
        {"only2", "modified_covnet", 64, kInf, 1, 0.2, -8.0, 10, 1.0},
    };
    write_metrics_csv(fx.file("f1.csv"), f1);
    write_metrics_csv(fx.file("f2.csv"), f2);
    auto merged = merge_metrics({fx.file("f1.csv"), fx.file("f2.csv")});
    REQUIRE(merged.size() == 4);
    int shared_rows = 0;
    for (const auto& r : merged)
        if (r.run_id == "shared") {
            ++shared_rows;
            CHECK(r.train_mse != 9.9);
        }
    CHECK(shared_rows == 2);
}

TEST_CASE("summaries keep each run's best clean training row") {
    std::vector<MetricsRow> rows = {
        {"runA", "covnet", 256, kInf, 1, 0.5, -3.0, 10, 1.0},
        {"runA", "covnet", 256, kInf, 2, 0.4, -7.0, 10, 2.0},
        {"runA", "covnet", 256, kInf, 3, 0.3, -5.0, 10, 3.0},
        // eval-only row (no train_mse): ignored even though it scores better
        {"runA-snr0", "covnet", 256, 0.0, 2, std::numeric_limits<double>::quiet_NaN(), -9.0, 10, 3.0},
        {"runB", "no_covariance_baseline", 256, kInf, 1, 0.6, -4.0, 11, 1.0},
    };
    auto sum = summarize(rows);
    REQUIRE(sum.size() == 2);
    // sorted by (variant, cr): covnet before no_covariance_baseline
    CHECK(sum[0].run_id == "runA");
    CHECK(sum[0].best_nmse_db == -7.0);
    CHECK(sum[0].best_epoch == 2);
    CHECK(sum[0].flops_total == 10);
    CHECK(sum[1].run_id == "runB");
    CHECK(sum[1].best_nmse_db == -4.0);
}

TEST_CASE("plots are self-contained SVG documents") {
    std::vector<MetricsRow> rows;
    for (auto cr : {32, 64, 256})
        for (auto variant : {"covnet", "no_covariance_baseline"})
            rows.push_back({std::string(variant) + "-cr" + std::to_string(cr), variant, cr, kInf, 1, 0.1,
                            cr == 32 ? -15.0 : -8.0, 10, 1.0});
    auto svg = plot_nmse_vs_cr(rows);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.rfind("</svg>") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("covnet") != std::string::npos);
    CHECK(svg.find("256") != std::string::npos);

    std::vector<MetricsRow> noise_rows;
    for (double snr : {0.0, 5.0, 10.0})
        noise_rows.push_back({"covnet-cr256-snr", "covnet", 256, snr, 0, std::numeric_limits<double>::quiet_NaN(),
                              -6.0 - snr * 0.1, 10, 1.0});
    noise_rows.push_back({"covnet-cr256-snrinf", "covnet", 256, kInf, 0, std::numeric_limits<double>::quiet_NaN(),
                          -8.0, 10, 1.0});
    auto svg2 = plot_nmse_vs_snr(noise_rows);
    CHECK(svg2.find("<svg") != std::string::npos);
    CHECK(svg2.find("inf") != std::string::npos);
}

TEST_CASE("sweep_cr covers the grid deterministically across worker counts") {
    Fixture fx;
    TrainConfig tc = fx.tc();
    tc.epochs = 1;
    const std::vector<std::int64_t> crs = {4, 8};
    const std::vector<Variant> variants = {Variant::covnet, Variant::no_covariance_baseline};

    auto r1 = sweep_cr(fx.train, fx.eval, fx.mc, tc, crs, variants, fx.file("sweep1"), 1);
    auto r2 = sweep_cr(fx.train, fx.eval, fx.mc, tc, crs, variants, fx.file("sweep2"), 2);

    REQUIRE(r1.run_ids.size() == 4);
    CHECK(r1.run_ids[0] == "covnet-cr4-s5");
    CHECK(r1.run_ids[1] == "covnet-cr8-s5");
    CHECK(r1.run_ids[2] == "no_covariance_baseline-cr4-s5");
    CHECK(r1.run_ids[3] == "no_covariance_baseline-cr8-s5");
    CHECK(r1.run_ids == r2.run_ids);
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        CHECK(r1.rows[i].eval_nmse_db == r2.rows[i].eval_nmse_db);
        CHECK(r1.rows[i].run_id == r2.rows[i].run_id);
    }
    for (const auto& p : r1.checkpoint_paths) {
        CHECK(!p.empty());
        CHECK(std::filesystem::exists(p));
    }

    // checkpoints reload into models of the right shape
    auto cfg = fx.mc;
    cfg.codeword_len = cr_to_codeword_len(8, 8, 4);
    CovNetModel<float> m(cfg, 0);
    load_checkpoint(m.params(), r1.checkpoint_paths[0]);
}

TEST_CASE("worker resolution prefers the environment cap") {
    ::unsetenv("COVNET_THREADS");
    CHECK(resolve_workers(4) == 4);
    CHECK(resolve_workers(0) == 1);
    CHECK(resolve_workers(-2) == 1);
    ::setenv("COVNET_THREADS", "3", 1);
    CHECK(resolve_workers(8) == 3);
    ::setenv("COVNET_THREADS", "junk", 1);
    CHECK(resolve_workers(8) == 8);
    ::unsetenv("COVNET_THREADS");
}
