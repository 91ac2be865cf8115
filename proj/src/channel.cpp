#include "covnet/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "covnet/covariance.hpp"
#include "covnet/transforms.hpp"

namespace covnet {

void ChannelConfig::validate() const {
    if (n_tx < 1 || n_sub < 1) throw std::invalid_argument("channel config: antenna/subcarrier counts must be positive");
    if (n_delay > n_sub) throw std::invalid_argument("channel config: n_delay must not exceed n_sub");
    if (n_paths < 1) throw std::invalid_argument("channel config: n_paths must be >= 1");
    if (snapshots_per_geometry < 2) throw std::invalid_argument("channel config: snapshots_per_geometry must be >= 2");
    if (delay_max <= 0 || delay_max >= static_cast<double>(n_delay))
        throw std::invalid_argument("channel config: delay_max must lie in (0, n_delay) to keep energy in the truncation window");
    if (delay_offset < 0 || delay_offset + delay_max > static_cast<double>(n_delay))
        throw std::invalid_argument("channel config: delay_offset + delay_max must not exceed n_delay");
    if (uplink_downlink_freq_ratio < 1.0)
        throw std::invalid_argument("channel config: uplink_downlink_freq_ratio must be >= 1");
    if (angle_spread_deg < 0) throw std::invalid_argument("channel config: angle_spread_deg must be >= 0");
    if (delay_decay < 0) throw std::invalid_argument("channel config: delay_decay must be >= 0");
}

PathSet draw_geometry(const ChannelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t P = static_cast<std::size_t>(cfg.n_paths);
    PathSet ps;
    ps.angles.resize(P);
    ps.delays.resize(P);
    ps.magnitudes.resize(P);
    ps.phases_dl.assign(P, 0.0);
    ps.phases_ul.assign(P, 0.0);

    const double center = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    const double spread = cfg.angle_spread_deg * std::numbers::pi / 180.0;
    for (std::size_t p = 0; p < P; ++p) {
        ps.angles[p] = center + spread * rng.gaussian();
        ps.delays[p] = cfg.delay_offset + rng.uniform(0.0, cfg.delay_max);
    }
    // power decays exponentially across the delay span, then the set is
    // normalized so the expected snapshot Frobenius norm is exactly 1:
    // E||H||_F^2 = N_c * sum_p g_p^2 (unit-norm steering, independent phases)
    double sum_sq = 0;
    for (std::size_t p = 0; p < P; ++p) {
        ps.magnitudes[p] = std::exp(-cfg.delay_decay * (ps.delays[p] - cfg.delay_offset) / cfg.delay_max);
        sum_sq += ps.magnitudes[p] * ps.magnitudes[p];
    }
    const double norm = 1.0 / std::sqrt(sum_sq * static_cast<double>(cfg.n_sub));
    for (auto& m : ps.magnitudes) m *= norm;
    return ps;
}

CMat synthesize_channel(PathSet& paths, const ChannelConfig& cfg, Band band, Rng& rng) {
    const std::size_t P = paths.angles.size();
    if (P == 0 || paths.delays.size() != P || paths.magnitudes.size() != P)
        throw std::invalid_argument("synthesize_channel: malformed path set");
    auto& phases = band == Band::downlink ? paths.phases_dl : paths.phases_ul;
    phases.resize(P);
    for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const double spacing_scale = band == Band::uplink ? cfg.uplink_downlink_freq_ratio : 1.0;
    const std::int64_t n_t = cfg.n_tx, n_c = cfg.n_sub;
    const double inv_sqrt_nt = 1.0 / std::sqrt(static_cast<double>(n_t));

    CMat h(n_c, n_t);
    std::vector<cx> steering(static_cast<std::size_t>(n_t));
    for (std::size_t p = 0; p < P; ++p) {
        const double phase_step = std::numbers::pi * spacing_scale * std::sin(paths.angles[p]);
        cx s(inv_sqrt_nt, 0.0);
        const cx s_step = std::polar(1.0, phase_step);
        for (std::int64_t t = 0; t < n_t; ++t) {
            steering[static_cast<std::size_t>(t)] = s;
            s *= s_step;
        }
        cx c = std::polar(paths.magnitudes[p], phases[p]);
        const cx d_step = std::polar(1.0, -2.0 * std::numbers::pi * paths.delays[p] / static_cast<double>(n_c));
        for (std::int64_t i = 0; i < n_c; ++i) {
            cx* row = h.a.data() + i * n_t;
            for (std::int64_t t = 0; t < n_t; ++t) row[t] += c * steering[static_cast<std::size_t>(t)];
            c *= d_step;
        }
    }
    return h;
}

Sample generate_sample(const ChannelConfig& cfg, std::uint64_t sample_index) {
    cfg.validate();
    Rng rng = Rng::stream(cfg.seed, sample_index);
    PathSet paths = draw_geometry(cfg, rng);

    CMat held_out = synthesize_channel(paths, cfg, Band::downlink, rng);
    Sample s;
    s.h_truncated = to_angle_delay_truncated(held_out, cfg.n_delay);

    std::vector<CMat> snapshots;
    snapshots.reserve(static_cast<std::size_t>(cfg.snapshots_per_geometry));
    for (std::int64_t t = 0; t < cfg.snapshots_per_geometry; ++t) {
        CMat snap = synthesize_channel(paths, cfg, Band::downlink, rng);
        snapshots.push_back(to_angle_delay_truncated(snap, cfg.n_delay));
    }
    s.covariance = estimate_covariance(snapshots);
    return s;
}

double truncation_energy_fraction(const ChannelConfig& cfg, std::int64_t n_geometries) {
    cfg.validate();
    if (n_geometries < 1) throw std::invalid_argument("truncation_energy_fraction: need at least one geometry");
    double acc = 0;
    for (std::int64_t g = 0; g < n_geometries; ++g) {
        // reserved diagnostic stream range, clear of dataset sample indices
        Rng rng = Rng::stream(cfg.seed, 0xff00000000000000ULL + static_cast<std::uint64_t>(g));
        PathSet paths = draw_geometry(cfg, rng);
        CMat h = synthesize_channel(paths, cfg, Band::downlink, rng);
        CMat ha = to_angle_delay(h);
        double total = frob_norm_sq(ha);
        double in_window = 0;
        for (std::int64_t i = 0; i < cfg.n_delay; ++i)
            for (std::int64_t j = 0; j < cfg.n_tx; ++j) in_window += std::norm(ha.at(i, j));
        acc += in_window / total;
    }
    return acc / static_cast<double>(n_geometries);
}

} // namespace covnet
