#include "covnet/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "covnet/io.hpp"
#include "covnet/transforms.hpp"

namespace covnet {

namespace {

// complex matrix -> real block then imag block, f32
void write_cmat_f32(std::ostream& os, const CMat& m) {
    std::vector<float> buf(static_cast<std::size_t>(2 * m.numel()));
    const std::size_t half = static_cast<std::size_t>(m.numel());
    for (std::size_t i = 0; i < half; ++i) {
        buf[i] = static_cast<float>(m.a[i].real());
        buf[half + i] = static_cast<float>(m.a[i].imag());
    }
    io::write_f32_block(os, buf.data(), buf.size());
}

CMat read_cmat_f32(std::istream& is, std::int64_t rows, std::int64_t cols) {
    std::vector<float> buf(static_cast<std::size_t>(2 * rows * cols));
    io::read_f32_block(is, buf.data(), buf.size());
    CMat m(rows, cols);
    const std::size_t half = static_cast<std::size_t>(rows * cols);
    for (std::size_t i = 0; i < half; ++i) m.a[i] = cx(buf[i], buf[half + i]);
    return m;
}

std::streamoff sample_bytes(const DatasetHeader& h) {
    const std::int64_t na = h.n_a, nt = h.n_t;
    std::int64_t floats = 2 * na * nt + na * 2 * nt * nt;
    if (h.has_covpre()) floats += 2 * na * nt + 2 * 2 * nt * nt;
    std::streamoff bytes = static_cast<std::streamoff>(floats) * 4;
    if (h.has_covpre()) bytes += 8;  // i_m1, i_m2
    return bytes;
}

} // namespace

GenerateResult generate_dataset(const ChannelConfig& cfg, std::int64_t n_samples, const std::string& path,
                                std::uint32_t version, const PreprocessOptions& pre_opt) {
    cfg.validate();
    if (n_samples < 1) throw std::invalid_argument("generate_dataset: n_samples must be >= 1");
    if (version != kDatasetVersionRaw && version != kDatasetVersionPre)
        throw std::invalid_argument("generate_dataset: unsupported CVDS version " + std::to_string(version));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("generate_dataset: cannot open " + path + " for writing");
    io::write_magic(f, kDatasetMagic);
    io::write_le<std::uint32_t>(f, version);
    io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(n_samples));
    io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(cfg.n_delay));
    io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(cfg.n_tx));
    io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(cfg.snapshots_per_geometry));

    for (std::int64_t idx = 0; idx < n_samples; ++idx) {
        Sample s = generate_sample(cfg, static_cast<std::uint64_t>(idx));
        write_cmat_f32(f, s.h_truncated);
        for (const auto& c : s.covariance) write_cmat_f32(f, c);
        if (version >= kDatasetVersionPre) {
            std::vector<double> inst_power;
            const std::vector<double>* inst_ptr = nullptr;
            if (pre_opt.instantaneous_power) {
                inst_power.resize(static_cast<std::size_t>(s.h_truncated.rows));
                for (std::int64_t n = 0; n < s.h_truncated.rows; ++n) {
                    double acc = 0;
                    for (std::int64_t j = 0; j < s.h_truncated.cols; ++j) acc += std::norm(s.h_truncated.at(n, j));
                    inst_power[static_cast<std::size_t>(n)] = acc;
                }
                inst_ptr = &inst_power;
            }
            CovPre pre = preprocess(s.covariance, pre_opt, inst_ptr);
            write_cmat_f32(f, pre.q_bar);
            write_cmat_f32(f, pre.c_bar_1);
            write_cmat_f32(f, pre.c_bar_2);
            io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(pre.i_m1));
            io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(pre.i_m2));
        }
    }
    f.flush();
    if (!f) throw std::runtime_error("generate_dataset: write failed on " + path);
    f.close();

    GenerateResult res;
    res.path = path;
    res.file_hash = hash_file(path);
    {
        std::ifstream check(path, std::ios::binary | std::ios::ate);
        res.file_bytes = static_cast<std::uint64_t>(check.tellg());
    }
    res.truncation_energy = truncation_energy_fraction(cfg, std::min<std::int64_t>(n_samples, 16));
    return res;
}

DatasetHeader read_dataset_header(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + path);
    io::expect_magic(f, kDatasetMagic, "dataset");
    DatasetHeader h;
    h.version = io::read_le<std::uint32_t>(f);
    if (h.version != kDatasetVersionRaw && h.version != kDatasetVersionPre)
        throw std::runtime_error("dataset: unsupported CVDS version " + std::to_string(h.version));
    h.n_samples = io::read_le<std::uint32_t>(f);
    h.n_a = io::read_le<std::uint32_t>(f);
    h.n_t = io::read_le<std::uint32_t>(f);
    h.t_snapshots = io::read_le<std::uint32_t>(f);
    return h;
}

Dataset load_dataset(const std::string& path, const LoadOptions& opt) {
    Dataset ds;
    ds.header = read_dataset_header(path);
    const auto& h = ds.header;
    if (opt.load_covpre && !h.has_covpre())
        throw std::invalid_argument("dataset: " + path + " is version " + std::to_string(h.version) +
                                    " and carries no preprocessed covariance region");

    const std::int64_t total = h.n_samples;
    if (opt.skip_samples < 0 || opt.skip_samples >= total)
        throw std::invalid_argument("dataset: skip_samples " + std::to_string(opt.skip_samples) +
                                    " leaves no samples out of " + std::to_string(total));

    std::ifstream f(path, std::ios::binary);
    io::expect_magic(f, kDatasetMagic, "dataset");
    for (int i = 0; i < 5; ++i) (void)io::read_le<std::uint32_t>(f);

    const std::int64_t begin = opt.skip_samples;
    std::int64_t count = total - begin;
    if (opt.max_samples >= 0) count = std::min(count, opt.max_samples);
    if (begin > 0) io::skip_bytes(f, begin * sample_bytes(h));

    const std::int64_t na = h.n_a, nt = h.n_t;
    ds.samples.resize(static_cast<std::size_t>(count));
    for (auto& s : ds.samples) {
        s.h_stacked.resize(static_cast<std::size_t>(2 * na * nt));
        io::read_f32_block(f, s.h_stacked.data(), s.h_stacked.size());
        if (opt.load_covariance) {
            s.covariance.reserve(static_cast<std::size_t>(na));
            for (std::int64_t n = 0; n < na; ++n) s.covariance.push_back(read_cmat_f32(f, nt, nt));
        } else {
            io::skip_bytes(f, static_cast<std::streamoff>(na) * 2 * nt * nt * 4);
        }
        if (h.has_covpre()) {
            if (opt.load_covpre) {
                s.q_bar_stacked.resize(static_cast<std::size_t>(2 * na * nt));
                io::read_f32_block(f, s.q_bar_stacked.data(), s.q_bar_stacked.size());
                s.c_bar_stacked.resize(static_cast<std::size_t>(4 * nt * nt));
                io::read_f32_block(f, s.c_bar_stacked.data(), s.c_bar_stacked.size());
                s.i_m1 = io::read_le<std::uint32_t>(f);
                s.i_m2 = io::read_le<std::uint32_t>(f);
            } else {
                io::skip_bytes(f, static_cast<std::streamoff>(2 * na * nt + 4 * nt * nt) * 4 + 8);
            }
        }
    }
    if (!f) throw std::runtime_error("dataset: truncated file " + path);
    return ds;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("hash_file: cannot open " + path);
    std::vector<char> chunk(1 << 20);
    std::uint64_t h = 0xcbf29ce484222325ull;
    while (f) {
        f.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
        const auto got = f.gcount();
        if (got > 0) h = fnv1a64(chunk.data(), static_cast<std::size_t>(got), h);
    }
    return h;
}

void write_dataset_manifest(const std::string& manifest_path, const ChannelConfig& cfg,
                            std::int64_t n_samples, const GenerateResult& result) {
    nlohmann::json j;
    j["kind"] = "cvds-dataset";
    j["config"] = {
        {"n_tx", cfg.n_tx},
        {"n_sub", cfg.n_sub},
        {"n_delay", cfg.n_delay},
        {"n_paths", cfg.n_paths},
        {"angle_spread_deg", cfg.angle_spread_deg},
        {"delay_max", cfg.delay_max},
        {"delay_offset", cfg.delay_offset},
        {"delay_decay", cfg.delay_decay},
        {"snapshots_per_geometry", cfg.snapshots_per_geometry},
        {"uplink_downlink_freq_ratio", cfg.uplink_downlink_freq_ratio},
        {"seed", cfg.seed},
    };
    j["n_samples"] = n_samples;
    j["file"] = result.path;
    j["file_bytes"] = result.file_bytes;
    j["file_hash_fnv1a64"] = result.file_hash;
    j["truncation_energy_fraction"] = result.truncation_energy;
    const auto now = std::chrono::system_clock::now();
    j["created_unix_s"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();

    std::ofstream f(manifest_path);
    if (!f) throw std::runtime_error("manifest: cannot open " + manifest_path + " for writing");
    f << j.dump(2) << "\n";
}

} // namespace covnet
