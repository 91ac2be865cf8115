#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covnet/channel.hpp"
#include "covnet/cmat.hpp"
#include "covnet/covariance.hpp"

// CVDS dataset container.
//
// Layout (all integers and floats little-endian):
//   magic "CVDS", version u32 (1 or 2), n_samples u32, N_a u32, N_t u32, T u32
//   then per sample:
//     H   2·N_a·N_t f32   (full real block, then full imag block — identical
//                          bytes to the StackedReal form of H)
//     C_n N_a × (2·N_t·N_t f32)  (per matrix: real block, imag block)
//   version 2 appends per sample:
//     Q̄   2·N_a·N_t f32
//     C̄   2 × (2·N_t·N_t f32)
//     i_m1 u32, i_m2 u32

namespace covnet {

inline constexpr char kDatasetMagic[4] = {'C', 'V', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersionRaw = 1;      // channels + covariances
inline constexpr std::uint32_t kDatasetVersionPre = 2;      // + preprocessed Q̄/C̄

struct DatasetHeader {
    std::uint32_t version = kDatasetVersionPre;
    std::uint32_t n_samples = 0;
    std::uint32_t n_a = 0;
    std::uint32_t n_t = 0;
    std::uint32_t t_snapshots = 0;
    bool has_covpre() const { return version >= kDatasetVersionPre; }
};

struct DatasetSample {
    std::vector<float> h_stacked;      // 2·N_a·N_t, StackedReal
    std::vector<CMat> covariance;      // N_a matrices (empty unless requested)
    std::vector<float> q_bar_stacked;  // 2·N_a·N_t (v2)
    std::vector<float> c_bar_stacked;  // 4·N_t·N_t (v2)
    std::uint32_t i_m1 = 0, i_m2 = 0;
};

struct Dataset {
    DatasetHeader header;
    std::vector<DatasetSample> samples;
};

struct LoadOptions {
    bool load_covariance = false;  // raw C_n matrices (needed for noisy eval)
    bool load_covpre = true;       // Q̄/C̄/index region
    std::int64_t max_samples = -1; // -1 = all
    std::int64_t skip_samples = 0; // leading samples to skip (train/test split)
};

struct GenerateResult {
    std::string path;
    std::uint64_t file_hash = 0;     // FNV-1a of the file bytes
    std::uint64_t file_bytes = 0;
    double truncation_energy = 0;    // mean in-window energy fraction diagnostic
};

// Generates n_samples geometries (pure function of cfg.seed + index),
// writes the CVDS file, and returns summary stats. Version 2 runs
// covariance preprocessing per sample and embeds Q̄/C̄.
GenerateResult generate_dataset(const ChannelConfig& cfg, std::int64_t n_samples, const std::string& path,
                                std::uint32_t version = kDatasetVersionPre,
                                const PreprocessOptions& pre_opt = {});

DatasetHeader read_dataset_header(const std::string& path);
Dataset load_dataset(const std::string& path, const LoadOptions& opt = {});

std::uint64_t hash_file(const std::string& path);

// JSON manifest next to the dataset: config, seed, creation time, hash.
void write_dataset_manifest(const std::string& manifest_path, const ChannelConfig& cfg,
                            std::int64_t n_samples, const GenerateResult& result);

} // namespace covnet
