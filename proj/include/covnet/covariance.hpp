#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "covnet/cmat.hpp"
#include "covnet/rng.hpp"

// Per-delay-row covariance estimation and the EVD-based preprocessing that
// turns long-term statistics into the network inputs Q̄ (top eigenvector
// per row) and C̄ (the two highest-power covariance matrices).

namespace covnet {

// C_n = (1/T) Σ_t h_{n,t} h_{n,t}ᴴ over the row-n vectors of T angle-delay
// snapshots, explicitly re-symmetrized. Requires T ≥ 2.
std::vector<CMat> estimate_covariance(const std::vector<CMat>& snapshots);

// Band extrapolation hook. Under the perfect-extrapolation assumption this
// is the identity; it exists so a real uplink→downlink translation can slot
// in without touching callers.
std::vector<CMat> extrapolate(const std::vector<CMat>& cov_ul);

struct EigPair {
    std::vector<cx> vector;  // unit norm, largest-|component| rotated real-positive
    double value = 0;        // Rayleigh quotient at the returned vector
};

// Dominant eigenpair of a Hermitian matrix by shifted power iteration
// (shift ‖C‖_F keeps the iteration valid for indefinite inputs such as
// noise-injected covariances). Deterministic: fixed start vector, seeded
// restarts. Throws on non-Hermitian input or non-convergence.
EigPair top_eigenvector(const CMat& c, double tol = 1e-10, std::int64_t max_iter_per_restart = 0);

// Smallest eigenvalue via power iteration on (λ_max·I − C), converged on
// the value only: accurate to roughly the Rayleigh-quotient settle even when
// the flipped spectrum is clustered (rank-deficient C). Diagnostic helper
// for PSD invariant checks; no eigenvector contract.
double min_eigenvalue(const CMat& c);

struct PreprocessOptions {
    bool conjugate_q_rows = true;     // Q̄ rows as conjugate transpose (Eq. as written)
    bool instantaneous_power = false; // rank rows by held-out ‖h_n‖² instead of trace(C_n)
};

struct CovPre {
    CMat q_bar;                   // N_a×N_t
    CMat c_bar_1, c_bar_2;        // selected covariance matrices
    std::int64_t i_m1 = 0, i_m2 = 1;
    std::vector<double> row_powers;
};

// Q̄ from per-row dominant eigenvectors; rows ranked by trace(C_n) (or the
// caller-supplied instantaneous powers), two winners selected with
// first-index tie-break; C̄ = (C_{i_m1}, C_{i_m2}).
CovPre preprocess(const std::vector<CMat>& cov, const PreprocessOptions& opt = {},
                  const std::vector<double>* instantaneous_row_power = nullptr);

// Additive complex Gaussian noise at the requested SNR, per-entry variance
// σ² = ‖X‖_F²/(numel·10^(snr/10)). The covariance overload draws a
// Hermitian-structured perturbation (conjugate-pair off-diagonals, real
// diagonal) so the output stays exactly Hermitian at the requested noise
// power; the result may be indefinite and downstream EVD tolerates that.
// snr_db = +inf is the documented "no noise" sentinel.
CMat inject_noise_matrix(const CMat& x, double snr_db, Rng& rng);
CMat inject_noise_hermitian(const CMat& c, double snr_db, Rng& rng);
std::vector<CMat> inject_noise(const std::vector<CMat>& cov, double snr_db, Rng& rng);

// Model-input stacking: C̄ as 4 real channels [Re C1, Im C1, Re C2, Im C2],
// each N_t×N_t row-major.
template <typename T>
std::vector<T> stack_cbar(const CovPre& pre) {
    const auto n = static_cast<std::size_t>(pre.c_bar_1.numel());
    std::vector<T> out(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<T>(pre.c_bar_1.a[i].real());
        out[n + i] = static_cast<T>(pre.c_bar_1.a[i].imag());
        out[2 * n + i] = static_cast<T>(pre.c_bar_2.a[i].real());
        out[3 * n + i] = static_cast<T>(pre.c_bar_2.a[i].imag());
    }
    return out;
}

} // namespace covnet
