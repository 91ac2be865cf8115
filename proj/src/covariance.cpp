#include "covnet/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace covnet {

std::vector<CMat> estimate_covariance(const std::vector<CMat>& snapshots) {
    if (snapshots.size() < 2)
        throw std::invalid_argument("estimate_covariance: need at least 2 snapshots, got " + std::to_string(snapshots.size()));
    const std::int64_t n_a = snapshots[0].rows, n_t = snapshots[0].cols;
    for (const auto& s : snapshots)
        if (s.rows != n_a || s.cols != n_t)
            throw std::invalid_argument("estimate_covariance: snapshot shape mismatch");

    std::vector<CMat> cov(static_cast<std::size_t>(n_a), CMat(n_t, n_t));
    for (const auto& snap : snapshots)
        for (std::int64_t n = 0; n < n_a; ++n) {
            const cx* h = snap.a.data() + n * n_t;
            CMat& c = cov[static_cast<std::size_t>(n)];
            for (std::int64_t j = 0; j < n_t; ++j) {
                const cx hj = h[j];
                for (std::int64_t k = 0; k < n_t; ++k) c.at(j, k) += hj * std::conj(h[k]);
            }
        }
    const double inv_t = 1.0 / static_cast<double>(snapshots.size());
    for (auto& c : cov) {
        for (auto& v : c.a) v *= inv_t;
        // (C + Cᴴ)/2 to kill accumulation roundoff
        for (std::int64_t j = 0; j < n_t; ++j) {
            c.at(j, j) = cx(c.at(j, j).real(), 0.0);
            for (std::int64_t k = j + 1; k < n_t; ++k) {
                const cx avg = 0.5 * (c.at(j, k) + std::conj(c.at(k, j)));
                c.at(j, k) = avg;
                c.at(k, j) = std::conj(avg);
            }
        }
    }
    return cov;
}

std::vector<CMat> extrapolate(const std::vector<CMat>& cov_ul) { return cov_ul; }

namespace {

double rayleigh_from(const std::vector<cx>& v, const std::vector<cx>& cv) {
    cx acc(0, 0);
    for (std::size_t i = 0; i < v.size(); ++i) acc += std::conj(v[i]) * cv[i];
    return acc.real();
}

double residual_from(const std::vector<cx>& v, const std::vector<cx>& cv, double lambda) {
    double acc = 0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += std::norm(cv[i] - lambda * v[i]);
    return std::sqrt(acc);
}

void normalize(std::vector<cx>& v) {
    double n = 0;
    for (const auto& e : v) n += std::norm(e);
    n = std::sqrt(n);
    if (n == 0) throw std::runtime_error("top_eigenvector: iterate collapsed to zero");
    for (auto& e : v) e /= n;
}

// largest-magnitude component made real-positive; ties go to the first index
void fix_phase(std::vector<cx>& v) {
    std::size_t best = 0;
    double best_mag = std::norm(v[0]);
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::norm(v[i]) > best_mag) { best = i; best_mag = std::norm(v[i]); }
    const double mag = std::abs(v[best]);
    if (mag == 0) return;
    const cx rot = std::conj(v[best]) / mag;
    for (auto& e : v) e *= rot;
    v[best] = cx(std::abs(v[best]), 0.0);
}

} // namespace

EigPair top_eigenvector(const CMat& c, double tol, std::int64_t max_iter_per_restart) {
    if (c.rows != c.cols) throw std::invalid_argument("top_eigenvector: matrix must be square");
    const std::int64_t n = c.rows;
    const double scale = frob_norm(c);
    if (hermitian_deviation(c) > 1e-8 * std::max(1.0, scale))
        throw std::invalid_argument("top_eigenvector: input is not Hermitian within tolerance");
    // the budget must absorb moderate spectral gaps (restarts only guard
    // against degenerate starting vectors, they do not accumulate progress)
    if (max_iter_per_restart <= 0) max_iter_per_restart = std::max<std::int64_t>(3000, 400 * n);

    EigPair out;
    out.vector.assign(static_cast<std::size_t>(n), cx(0, 0));
    if (scale == 0.0) {  // zero matrix: any unit vector, deterministic pick
        out.vector[0] = cx(1, 0);
        out.value = 0.0;
        return out;
    }

    // shifted iteration B = C + ‖C‖_F·I keeps the dominant *algebraic*
    // eigenvalue of C dominant in magnitude even for indefinite C
    const double shift = scale;
    const int max_restarts = 4;
    for (int restart = 0; restart < max_restarts; ++restart) {
        std::vector<cx> v(static_cast<std::size_t>(n));
        if (restart == 0) {
            // fixed start: mild ramp avoids symmetry traps on structured inputs
            for (std::int64_t i = 0; i < n; ++i)
                v[static_cast<std::size_t>(i)] = cx(1.0 + 1e-3 * static_cast<double>(i), 1e-4 * static_cast<double>(n - i));
        } else {
            Rng r(0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(restart));
            for (auto& e : v) e = cx(r.gaussian(), r.gaussian());
        }
        normalize(v);
        auto cv = cmat_matvec(c, v);
        double lambda = rayleigh_from(v, cv);
        for (std::int64_t it = 0; it < max_iter_per_restart; ++it) {
            for (std::int64_t i = 0; i < n; ++i) cv[static_cast<std::size_t>(i)] += shift * v[static_cast<std::size_t>(i)];
            normalize(cv);
            v = std::move(cv);
            cv = cmat_matvec(c, v);
            const double next = rayleigh_from(v, cv);
            const bool rq_settled = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
            lambda = next;
            if (rq_settled && residual_from(v, cv, lambda) <= 1e-8 * std::max(1.0, lambda)) {
                fix_phase(v);
                out.vector = std::move(v);
                out.value = lambda;
                return out;
            }
        }
    }
    throw std::runtime_error("top_eigenvector: power iteration failed to converge after bounded restarts");
}

namespace {

// Value-only power iteration. The Rayleigh quotient converges second-order
// in the eigenvector error, so it settles to usable accuracy even when the
// top eigenvalue is clustered (e.g. the near-kernel of a low-rank
// covariance flipped around λ_max), where the strict eigenpair residual is
// unreachable in any reasonable budget. Always a slight underestimate.
double top_value_relaxed(const CMat& c) {
    const std::int64_t n = c.rows;
    const double scale = frob_norm(c);
    if (scale == 0.0) return 0.0;
    std::vector<cx> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = cx(1.0 + 1e-3 * static_cast<double>(i), 1e-4 * static_cast<double>(n - i));
    normalize(v);
    auto cv = cmat_matvec(c, v);
    double lambda = rayleigh_from(v, cv);
    const std::int64_t max_iters = std::max<std::int64_t>(2000, 200 * n);
    for (std::int64_t it = 0; it < max_iters; ++it) {
        for (std::int64_t i = 0; i < n; ++i) cv[static_cast<std::size_t>(i)] += scale * v[static_cast<std::size_t>(i)];
        normalize(cv);
        v = std::move(cv);
        cv = cmat_matvec(c, v);
        const double next = rayleigh_from(v, cv);
        const bool settled = std::abs(next - lambda) <= 1e-13 * std::max(1.0, std::abs(next));
        lambda = next;
        if (settled) break;
    }
    return lambda;
}

} // namespace

double min_eigenvalue(const CMat& c) {
    if (c.rows != c.cols) throw std::invalid_argument("min_eigenvalue: matrix must be square");
    if (hermitian_deviation(c) > 1e-8 * std::max(1.0, frob_norm(c)))
        throw std::invalid_argument("min_eigenvalue: input is not Hermitian within tolerance");
    const double top = top_value_relaxed(c);
    // spectrum of (λ_max·I − C) is λ_max − λ_i ≥ 0; its top eigenvalue
    // recovers λ_max − λ_min
    CMat flipped = cmat_scale(c, cx(-1, 0));
    for (std::int64_t i = 0; i < c.rows; ++i) flipped.at(i, i) += top;
    return top - top_value_relaxed(flipped);
}

CovPre preprocess(const std::vector<CMat>& cov, const PreprocessOptions& opt,
                  const std::vector<double>* instantaneous_row_power) {
    const std::int64_t n_a = static_cast<std::int64_t>(cov.size());
    if (n_a < 2) throw std::invalid_argument("preprocess: need at least 2 covariance rows, got " + std::to_string(n_a));
    const std::int64_t n_t = cov[0].rows;

    CovPre pre;
    pre.row_powers.resize(static_cast<std::size_t>(n_a));
    if (opt.instantaneous_power) {
        if (!instantaneous_row_power || static_cast<std::int64_t>(instantaneous_row_power->size()) != n_a)
            throw std::invalid_argument("preprocess: instantaneous ranking requested without a row-power vector");
        pre.row_powers = *instantaneous_row_power;
    } else {
        for (std::int64_t n = 0; n < n_a; ++n) {
            double tr = 0;
            for (std::int64_t j = 0; j < n_t; ++j) tr += cov[static_cast<std::size_t>(n)].at(j, j).real();
            pre.row_powers[static_cast<std::size_t>(n)] = tr;
        }
    }

    // two largest powers, first index wins ties
    std::int64_t m1 = 0;
    for (std::int64_t n = 1; n < n_a; ++n)
        if (pre.row_powers[static_cast<std::size_t>(n)] > pre.row_powers[static_cast<std::size_t>(m1)]) m1 = n;
    std::int64_t m2 = m1 == 0 ? 1 : 0;
    for (std::int64_t n = 0; n < n_a; ++n) {
        if (n == m1) continue;
        if (pre.row_powers[static_cast<std::size_t>(n)] > pre.row_powers[static_cast<std::size_t>(m2)]) m2 = n;
    }
    pre.i_m1 = m1;
    pre.i_m2 = m2;
    pre.c_bar_1 = cov[static_cast<std::size_t>(m1)];
    pre.c_bar_2 = cov[static_cast<std::size_t>(m2)];

    pre.q_bar = CMat(n_a, n_t);
    for (std::int64_t n = 0; n < n_a; ++n) {
        const auto eig = top_eigenvector(cov[static_cast<std::size_t>(n)]);
        for (std::int64_t j = 0; j < n_t; ++j) {
            const cx q = eig.vector[static_cast<std::size_t>(j)];
            pre.q_bar.at(n, j) = opt.conjugate_q_rows ? std::conj(q) : q;
        }
    }
    return pre;
}

namespace {
double noise_sigma_sq(double frob_sq, std::int64_t numel, double snr_db) {
    return frob_sq / (static_cast<double>(numel) * std::pow(10.0, snr_db / 10.0));
}
} // namespace

CMat inject_noise_matrix(const CMat& x, double snr_db, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0) return x;
    const double sigma = std::sqrt(noise_sigma_sq(frob_norm_sq(x), x.numel(), snr_db));
    CMat out = x;
    const double per_axis = sigma / std::sqrt(2.0);
    for (auto& v : out.a) v += cx(per_axis * rng.gaussian(), per_axis * rng.gaussian());
    return out;
}

CMat inject_noise_hermitian(const CMat& c, double snr_db, Rng& rng) {
    if (c.rows != c.cols) throw std::invalid_argument("inject_noise_hermitian: matrix must be square");
    if (std::isinf(snr_db) && snr_db > 0) return c;
    const double sigma = std::sqrt(noise_sigma_sq(frob_norm_sq(c), c.numel(), snr_db));
    CMat out = c;
    const double per_axis = sigma / std::sqrt(2.0);
    for (std::int64_t i = 0; i < c.rows; ++i) {
        out.at(i, i) += cx(sigma * rng.gaussian(), 0.0);
        for (std::int64_t j = i + 1; j < c.cols; ++j) {
            const cx e(per_axis * rng.gaussian(), per_axis * rng.gaussian());
            out.at(i, j) += e;
            out.at(j, i) += std::conj(e);
        }
    }
    return out;
}

std::vector<CMat> inject_noise(const std::vector<CMat>& cov, double snr_db, Rng& rng) {
    std::vector<CMat> out;
    out.reserve(cov.size());
    for (const auto& c : cov) out.push_back(inject_noise_hermitian(c, snr_db, rng));
    return out;
}

} // namespace covnet
