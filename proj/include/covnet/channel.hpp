#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covnet/cmat.hpp"
#include "covnet/rng.hpp"

// Geometric multipath generator standing in for a full channel simulator.
// One geometry = a cluster of paths (angles, delays, magnitudes); snapshots
// redraw per-path phases only, so a geometry has stable second-order
// statistics while instantaneous channels fade.

namespace covnet {

enum class Band { downlink, uplink };

struct ChannelConfig {
    std::int64_t n_tx = 32;        // N_t
    std::int64_t n_sub = 256;      // N_c
    std::int64_t n_delay = 32;     // N_a truncation rows
    std::int64_t n_paths = 6;      // P
    double angle_spread_deg = 5.0;
    double delay_max = 16.0;       // path delay span in samples
    double delay_offset = 8.0;     // bulk delay added to every path
    std::int64_t snapshots_per_geometry = 64;  // T
    std::uint64_t seed = 0;
    double uplink_downlink_freq_ratio = 1.0;
    double delay_decay = 0.75;     // exponential power decay across the span

    void validate() const;
};

struct PathSet {
    std::vector<double> angles;      // radians
    std::vector<double> delays;      // fractional, sample units
    std::vector<double> magnitudes;  // sum of squares = 1/N_c
    std::vector<double> phases_dl;   // redrawn per downlink snapshot
    std::vector<double> phases_ul;   // redrawn per uplink snapshot
};

// Cluster-center angle uniform in (−π/2, π/2); per-path Gaussian offsets
// with std angle_spread_deg; delays delay_offset + uniform [0, delay_max);
// magnitudes exp-decay across the delay span, normalized so the expected
// snapshot Frobenius norm is 1.
PathSet draw_geometry(const ChannelConfig& cfg, Rng& rng);

// H̃ with h̃_i = Σ_p g_p e^{jφ_p} a(θ_p) e^{−j2πτ_p i/N_c}; the steering
// vector a(θ) = (1/√N_t)[1, e^{jπ sinθ}, …] carries the unit-norm factor
// so that per-row power of orthogonal paths is exactly Σ g_p². Fresh
// phases are drawn into the band's phase slot on every call. The uplink
// band scales the steering phase by uplink_downlink_freq_ratio.
CMat synthesize_channel(PathSet& paths, const ChannelConfig& cfg, Band band, Rng& rng);

struct Sample {
    CMat h_truncated;             // N_a×N_t angle-delay target channel
    std::vector<CMat> covariance; // N_a Hermitian N_t×N_t matrices
};

// One geometry per sample: a held-out downlink snapshot becomes the
// angle-delay target; T further snapshots feed covariance estimation.
// Pure function of (cfg.seed, sample_index) via counter-based RNG streams.
Sample generate_sample(const ChannelConfig& cfg, std::uint64_t sample_index);

// Mean fraction of angle-delay energy inside the first n_delay rows,
// estimated over the given number of fresh geometries.
double truncation_energy_fraction(const ChannelConfig& cfg, std::int64_t n_geometries);

} // namespace covnet
