#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "covnet/covariance.hpp"
#include "covnet/dataset.hpp"
#include "covnet/transforms.hpp"

using namespace covnet;

namespace {

ChannelConfig tiny_cfg() {
    ChannelConfig cfg;
    cfg.n_tx = 8;
    cfg.n_sub = 32;
    cfg.n_delay = 8;
    cfg.n_paths = 3;
    cfg.delay_max = 4.0;
    cfg.delay_offset = 2.0;
    cfg.snapshots_per_geometry = 6;
    cfg.seed = 4242;
    return cfg;
}

struct TempDir {
    std::filesystem::path p;
    TempDir() {
        p = std::filesystem::temp_directory_path() /
            ("covnet_dataset_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(p);
    }
    ~TempDir() { std::filesystem::remove_all(p); }
    std::string file(const std::string& name) const { return (p / name).string(); }
};

}  // namespace

TEST_CASE("v2 dataset round-trips samples and preprocessing") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    const auto path = tmp.file("d.cvds");
    auto res = generate_dataset(cfg, 4, path);
    CHECK(res.file_bytes == std::filesystem::file_size(path));
    CHECK(res.truncation_energy > 0.9);

    auto header = read_dataset_header(path);
    CHECK(header.version == kDatasetVersionPre);
    CHECK(header.n_samples == 4);
    CHECK(header.n_a == 8);
    CHECK(header.n_t == 8);
    CHECK(header.t_snapshots == 6);
    CHECK(header.has_covpre());

    LoadOptions opt;
    opt.load_covariance = true;
    auto ds = load_dataset(path, opt);
    REQUIRE(ds.samples.size() == 4);
    for (std::uint64_t i = 0; i < 4; ++i) {
        const auto& s = ds.samples[i];
        REQUIRE(s.h_stacked.size() == 2 * 8 * 8);
        REQUIRE(s.q_bar_stacked.size() == 2 * 8 * 8);
        REQUIRE(s.c_bar_stacked.size() == 4 * 8 * 8);
        REQUIRE(s.covariance.size() == 8);

        // stored bytes are the f32 cast of the generator output
        auto want = generate_sample(cfg, i);
        auto want_h = stack_real<float>(want.h_truncated);
        for (std::size_t k = 0; k < want_h.size(); ++k) CHECK(s.h_stacked[k] == want_h[k]);

        auto pre = preprocess(want.covariance);
        auto want_q = stack_real<float>(pre.q_bar);
        auto want_c = stack_cbar<float>(pre);
        for (std::size_t k = 0; k < want_q.size(); ++k) CHECK(s.q_bar_stacked[k] == want_q[k]);
        for (std::size_t k = 0; k < want_c.size(); ++k) CHECK(s.c_bar_stacked[k] == want_c[k]);
        CHECK(s.i_m1 == std::uint32_t(pre.i_m1));
        CHECK(s.i_m2 == std::uint32_t(pre.i_m2));

        for (std::size_t n = 0; n < 8; ++n)
            for (std::size_t k = 0; k < s.covariance[n].a.size(); ++k) {
                CHECK(float(s.covariance[n].a[k].real()) == float(want.covariance[n].a[k].real()));
                CHECK(float(s.covariance[n].a[k].imag()) == float(want.covariance[n].a[k].imag()));
            }
    }
}

TEST_CASE("v1 dataset omits the preprocessing block") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    const auto path = tmp.file("raw.cvds");
    generate_dataset(cfg, 2, path, kDatasetVersionRaw);
    auto header = read_dataset_header(path);
    CHECK(header.version == kDatasetVersionRaw);
    CHECK_FALSE(header.has_covpre());

    LoadOptions no_pre;
    no_pre.load_covpre = false;
    no_pre.load_covariance = true;
    auto ds = load_dataset(path, no_pre);
    CHECK(ds.samples[0].q_bar_stacked.empty());
    CHECK(ds.samples[0].covariance.size() == 8);

    // asking for covpre from a v1 file is a caller error
    LoadOptions want_pre;
    want_pre.load_covpre = true;
    CHECK_THROWS_AS(load_dataset(path, want_pre), std::invalid_argument);
}

TEST_CASE("skip/max options implement a train-eval split") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    const auto path = tmp.file("split.cvds");
    generate_dataset(cfg, 5, path);

    LoadOptions head;
    head.max_samples = 3;
    auto train = load_dataset(path, head);
    REQUIRE(train.samples.size() == 3);

    LoadOptions tail;
    tail.skip_samples = 3;
    auto eval = load_dataset(path, tail);
    REQUIRE(eval.samples.size() == 2);

    auto all = load_dataset(path);
    for (int i = 0; i < 3; ++i) CHECK(train.samples[i].h_stacked == all.samples[i].h_stacked);
    for (int i = 0; i < 2; ++i) CHECK(eval.samples[i].h_stacked == all.samples[i + 3].h_stacked);

    LoadOptions past_end;
    past_end.skip_samples = 5;
    CHECK_THROWS_AS(load_dataset(path, past_end), std::invalid_argument);
}

TEST_CASE("file size matches the layout arithmetic exactly") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    const auto path = tmp.file("one.cvds");
    generate_dataset(cfg, 1, path);
    const std::uint64_t n_a = 8, n_t = 8;
    const std::uint64_t header_bytes = 4 + 5 * 4;
    const std::uint64_t h_bytes = 2 * n_a * n_t * 4;
    const std::uint64_t cov_bytes = n_a * 2 * n_t * n_t * 4;
    const std::uint64_t pre_bytes = 2 * n_a * n_t * 4 + 2 * (2 * n_t * n_t * 4) + 2 * 4;
    CHECK(std::filesystem::file_size(path) == header_bytes + h_bytes + cov_bytes + pre_bytes);
}

TEST_CASE("regeneration with the same config is byte-identical") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    auto r1 = generate_dataset(cfg, 3, tmp.file("a.cvds"));
    auto r2 = generate_dataset(cfg, 3, tmp.file("b.cvds"));
    CHECK(r1.file_hash == r2.file_hash);
    CHECK(r1.file_bytes == r2.file_bytes);
    CHECK(hash_file(tmp.file("a.cvds")) == r1.file_hash);

    cfg.seed += 1;
    auto r3 = generate_dataset(cfg, 3, tmp.file("c.cvds"));
    CHECK(r3.file_hash != r1.file_hash);
}

TEST_CASE("manifest is valid JSON describing the file") {
    TempDir tmp;
    auto cfg = tiny_cfg();
    const auto path = tmp.file("m.cvds");
    auto res = generate_dataset(cfg, 2, path);
    const auto manifest = tmp.file("m.cvds.manifest.json");
    write_dataset_manifest(manifest, cfg, 2, res);

    std::ifstream in(manifest);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j["n_samples"].get<std::int64_t>() == 2);
    CHECK(j["config"]["n_tx"].get<std::int64_t>() == cfg.n_tx);
    CHECK(j["config"]["seed"].get<std::uint64_t>() == cfg.seed);
    CHECK(j["file_bytes"].get<std::uint64_t>() == res.file_bytes);
    CHECK(j["file_hash_fnv1a64"].get<std::uint64_t>() == res.file_hash);
}

TEST_CASE("corrupt headers are rejected") {
    TempDir tmp;
    const auto path = tmp.file("bad.cvds");
    {
        std::ofstream out(path, std::ios::binary);
        out.write("NOPE", 4);
    }
    CHECK_THROWS(read_dataset_header(path));
    CHECK_THROWS(load_dataset(path));
    CHECK_THROWS(read_dataset_header(tmp.file("missing.cvds")));
}
