#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "covnet/covariance.hpp"
#include "covnet/rng.hpp"

using namespace covnet;

namespace {

CMat random_cmat(std::int64_t r, std::int64_t c, Rng& rng) {
    CMat m(r, c);
    for (auto& v : m.a) v = cx(rng.gaussian(), rng.gaussian());
    return m;
}

CMat random_psd(std::int64_t n, Rng& rng) {
    auto a = random_cmat(n, n, rng);
    auto c = cmat_mul_nh(a, a);
    // FMA contraction can leave A·Aᴴ asymmetric at the last bit; mirror the
    // upper triangle so exactness-sensitive checks see a true Hermitian input
    for (std::int64_t i = 0; i < n; ++i) {
        c.at(i, i) = cx(c.at(i, i).real(), 0.0);
        for (std::int64_t j = i + 1; j < n; ++j) c.at(j, i) = std::conj(c.at(i, j));
    }
    return c;
}

// Gram-Schmidt on random columns -> unitary U, then C = U diag(evals) U^H
CMat matrix_with_spectrum(const std::vector<double>& evals, Rng& rng, CMat* u_out = nullptr) {
    const std::int64_t n = static_cast<std::int64_t>(evals.size());
    CMat u(n, n);
    for (std::int64_t k = 0; k < n; ++k) {
        std::vector<cx> v(static_cast<std::size_t>(n));
        for (auto& e : v) e = cx(rng.gaussian(), rng.gaussian());
        for (std::int64_t j = 0; j < k; ++j) {
            cx proj(0, 0);
            for (std::int64_t i = 0; i < n; ++i) proj += std::conj(u.at(i, j)) * v[static_cast<std::size_t>(i)];
            for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] -= proj * u.at(i, j);
        }
        double norm = 0;
        for (const auto& e : v) norm += std::norm(e);
        norm = std::sqrt(norm);
        for (std::int64_t i = 0; i < n; ++i) u.at(i, k) = v[static_cast<std::size_t>(i)] / norm;
    }
    CMat c(n, n);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            cx acc(0, 0);
            for (std::int64_t k = 0; k < n; ++k) acc += evals[static_cast<std::size_t>(k)] * u.at(i, k) * std::conj(u.at(j, k));
            c.at(i, j) = acc;
        }
    // exact symmetrization so the construction roundoff can't trip input checks
    for (std::int64_t i = 0; i < n; ++i) {
        c.at(i, i) = cx(c.at(i, i).real(), 0.0);
        for (std::int64_t j = i + 1; j < n; ++j) {
            const cx avg = 0.5 * (c.at(i, j) + std::conj(c.at(j, i)));
            c.at(i, j) = avg;
            c.at(j, i) = std::conj(avg);
        }
    }
    if (u_out) *u_out = u;
    return c;
}

double rayleigh(const CMat& c, const std::vector<cx>& v) {
    auto cv = cmat_matvec(c, v);
    cx num(0, 0);
    double den = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += std::conj(v[i]) * cv[i];
        den += std::norm(v[i]);
    }
    return num.real() / den;
}

}  // namespace

TEST_CASE("estimate_covariance matches a direct outer-product sum") {
    Rng rng(31);
    const std::int64_t n_a = 5, n_t = 6, t = 9;
    std::vector<CMat> snaps;
    for (std::int64_t i = 0; i < t; ++i) snaps.push_back(random_cmat(n_a, n_t, rng));

    auto cov = estimate_covariance(snaps);
    REQUIRE(std::int64_t(cov.size()) == n_a);
    for (std::int64_t n = 0; n < n_a; ++n)
        for (std::int64_t j = 0; j < n_t; ++j)
            for (std::int64_t k = 0; k < n_t; ++k) {
                cx want(0, 0);
                for (std::int64_t s = 0; s < t; ++s) want += snaps[std::size_t(s)].at(n, j) * std::conj(snaps[std::size_t(s)].at(n, k));
                want /= double(t);
                CHECK(std::abs(cov[std::size_t(n)].at(j, k) - want) < 1e-12);
            }

    CHECK_THROWS_AS(estimate_covariance({snaps[0]}), std::invalid_argument);
    auto bad = snaps;
    bad[1] = random_cmat(n_a, n_t + 1, rng);
    CHECK_THROWS_AS(estimate_covariance(bad), std::invalid_argument);
}

TEST_CASE("top_eigenvector recovers a planted spectrum") {
    Rng rng(32);
    CMat u;
    auto c = matrix_with_spectrum({5.0, 2.0, 1.0, 0.5, 0.1, 0.05}, rng, &u);
    auto eig = top_eigenvector(c);
    CHECK(eig.value == doctest::Approx(5.0).epsilon(1e-8));

    // vector matches the planted leading column up to phase
    cx overlap(0, 0);
    for (std::int64_t i = 0; i < c.rows; ++i) overlap += std::conj(u.at(i, 0)) * eig.vector[std::size_t(i)];
    CHECK(std::abs(overlap) == doctest::Approx(1.0).epsilon(1e-7));

    // eigen-residual bound
    auto cv = cmat_matvec(c, eig.vector);
    double res = 0;
    for (std::size_t i = 0; i < eig.vector.size(); ++i) res += std::norm(cv[i] - eig.value * eig.vector[i]);
    CHECK(std::sqrt(res) <= 1e-8 * std::max(1.0, eig.value));
}

TEST_CASE("returned Rayleigh quotient beats 1000 random directions") {
    Rng rng(33);
    auto c = random_psd(8, rng);
    auto eig = top_eigenvector(c);
    const double best = rayleigh(c, eig.vector);
    Rng probes(34);
    for (int k = 0; k < 1000; ++k) {
        std::vector<cx> v(8);
        for (auto& e : v) e = cx(probes.gaussian(), probes.gaussian());
        CHECK(rayleigh(c, v) <= best + 1e-9 * std::max(1.0, best));
    }
}

TEST_CASE("eigenpair is scale invariant and phase-fixed") {
    Rng rng(35);
    auto c = random_psd(6, rng);
    auto e1 = top_eigenvector(c);
    auto e2 = top_eigenvector(cmat_scale(c, cx(7.5, 0)));
    CHECK(e2.value == doctest::Approx(7.5 * e1.value).epsilon(1e-8));
    for (std::size_t i = 0; i < e1.vector.size(); ++i) CHECK(std::abs(e1.vector[i] - e2.vector[i]) < 1e-6);

    // phase convention: largest-|component| entry is real positive
    for (const auto& e : {e1, e2}) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < e.vector.size(); ++i)
            if (std::abs(e.vector[i]) > std::abs(e.vector[best])) best = i;
        CHECK(e.vector[best].imag() == 0.0);
        CHECK(e.vector[best].real() > 0.0);
    }
}

TEST_CASE("shifted iteration tracks the algebraically largest eigenvalue") {
    CMat c(2, 2);
    c.at(0, 0) = cx(3, 0);
    c.at(1, 1) = cx(-5, 0);
    auto eig = top_eigenvector(c);
    CHECK(eig.value == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(std::abs(eig.vector[0]) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(min_eigenvalue(c) == doctest::Approx(-5.0).epsilon(1e-8));
}

TEST_CASE("min_eigenvalue on a planted spectrum") {
    Rng rng(36);
    auto c = matrix_with_spectrum({4.0, 1.0, -2.0}, rng);
    CHECK(min_eigenvalue(c) == doctest::Approx(-2.0).epsilon(1e-7));
    CHECK(min_eigenvalue(cmat_identity(5)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("top_eigenvector rejects bad inputs") {
    Rng rng(37);
    CHECK_THROWS_AS(top_eigenvector(random_cmat(3, 4, rng)), std::invalid_argument);
    auto skew = random_cmat(4, 4, rng);  // generic matrix is far from Hermitian
    CHECK_THROWS_AS(top_eigenvector(skew), std::invalid_argument);
}

TEST_CASE("preprocess ranks rows by trace and breaks ties on the first index") {
    Rng rng(38);
    const std::int64_t n_t = 4;
    // traces: 1, 5, 2, 5 -> winners are rows 1 then 3
    // diagonals snapped to exactly tr/4 so the tied traces compare equal
    std::vector<double> traces = {1.0, 5.0, 2.0, 5.0};
    std::vector<CMat> cov;
    for (double tr : traces) {
        auto c = random_psd(n_t, rng);
        double got = 0;
        for (std::int64_t j = 0; j < n_t; ++j) got += c.at(j, j).real();
        c = cmat_scale(c, cx(tr / got, 0));
        for (std::int64_t j = 0; j < n_t; ++j) c.at(j, j) = cx(tr / 4.0, 0);
        cov.push_back(c);
    }
    auto pre = preprocess(cov);
    CHECK(pre.i_m1 == 1);
    CHECK(pre.i_m2 == 3);
    CHECK(pre.row_powers[1] == doctest::Approx(5.0));
    for (std::size_t i = 0; i < pre.c_bar_1.a.size(); ++i) {
        CHECK(pre.c_bar_1.a[i] == cov[1].a[i]);
        CHECK(pre.c_bar_2.a[i] == cov[3].a[i]);
    }

    // all-equal powers degenerate to the first two rows
    std::vector<CMat> flat(3, cmat_identity(n_t));
    auto pre_flat = preprocess(flat);
    CHECK(pre_flat.i_m1 == 0);
    CHECK(pre_flat.i_m2 == 1);
}

TEST_CASE("preprocess q_bar rows follow the conjugation option") {
    Rng rng(39);
    std::vector<CMat> cov;
    for (int n = 0; n < 3; ++n) cov.push_back(random_psd(5, rng));

    auto conj_pre = preprocess(cov);
    PreprocessOptions raw_opt;
    raw_opt.conjugate_q_rows = false;
    auto raw_pre = preprocess(cov, raw_opt);
    for (std::int64_t n = 0; n < 3; ++n) {
        auto eig = top_eigenvector(cov[std::size_t(n)]);
        for (std::int64_t j = 0; j < 5; ++j) {
            CHECK(std::abs(conj_pre.q_bar.at(n, j) - std::conj(eig.vector[std::size_t(j)])) < 1e-12);
            CHECK(std::abs(raw_pre.q_bar.at(n, j) - eig.vector[std::size_t(j)]) < 1e-12);
        }
    }
}

TEST_CASE("preprocess can rank by caller-supplied instantaneous powers") {
    Rng rng(40);
    std::vector<CMat> cov;
    for (int n = 0; n < 4; ++n) cov.push_back(random_psd(3, rng));
    std::vector<double> powers = {0.1, 0.2, 9.0, 3.0};
    PreprocessOptions opt;
    opt.instantaneous_power = true;
    auto pre = preprocess(cov, opt, &powers);
    CHECK(pre.i_m1 == 2);
    CHECK(pre.i_m2 == 3);
    CHECK_THROWS_AS(preprocess(cov, opt, nullptr), std::invalid_argument);
}

TEST_CASE("stack_cbar lays out four real channels") {
    Rng rng(41);
    std::vector<CMat> cov = {random_psd(3, rng), random_psd(3, rng)};
    auto pre = preprocess(cov);
    auto s = stack_cbar<float>(pre);
    REQUIRE(s.size() == 4 * 9);
    CHECK(s[0] == doctest::Approx(pre.c_bar_1.a[0].real()));
    CHECK(s[9] == doctest::Approx(pre.c_bar_1.a[0].imag()));
    CHECK(s[18] == doctest::Approx(pre.c_bar_2.a[0].real()));
    CHECK(s[27] == doctest::Approx(pre.c_bar_2.a[0].imag()));
}

TEST_CASE("infinite SNR injection is an exact copy") {
    Rng rng(42);
    auto c = random_psd(6, rng);
    Rng noise_rng(43);
    auto out = inject_noise_hermitian(c, std::numeric_limits<double>::infinity(), noise_rng);
    for (std::size_t i = 0; i < c.a.size(); ++i) CHECK(out.a[i] == c.a[i]);

    std::vector<CMat> cov = {c, cmat_scale(c, cx(2, 0))};
    auto out_vec = inject_noise(cov, std::numeric_limits<double>::infinity(), noise_rng);
    for (std::size_t n = 0; n < cov.size(); ++n)
        for (std::size_t i = 0; i < cov[n].a.size(); ++i) CHECK(out_vec[n].a[i] == cov[n].a[i]);
}

TEST_CASE("hermitian noise hits the requested SNR and keeps the structure") {
    Rng rng(44);
    auto c = random_psd(8, rng);
    const double target_db = 7.0;
    Rng noise_rng(45);
    double sig = 0, noise = 0;
    for (int trial = 0; trial < 400; ++trial) {
        auto noisy = inject_noise_hermitian(c, target_db, noise_rng);
        CHECK(hermitian_deviation(noisy) == 0.0);
        for (std::size_t i = 0; i < c.a.size(); ++i) noise += std::norm(noisy.a[i] - c.a[i]);
        sig += frob_norm_sq(c);
    }
    const double measured_db = 10.0 * std::log10(sig / noise);
    CHECK(measured_db == doctest::Approx(target_db).epsilon(0.07));  // ~0.5 dB

    // general-matrix overload obeys the same power budget
    Rng mat_rng(46);
    auto x = random_cmat(8, 8, rng);
    double msig = 0, mnoise = 0;
    for (int trial = 0; trial < 400; ++trial) {
        auto noisy = inject_noise_matrix(x, target_db, mat_rng);
        for (std::size_t i = 0; i < x.a.size(); ++i) mnoise += std::norm(noisy.a[i] - x.a[i]);
        msig += frob_norm_sq(x);
    }
    CHECK(10.0 * std::log10(msig / mnoise) == doctest::Approx(target_db).epsilon(0.07));
}

TEST_CASE("noisy covariances may go indefinite but the EVD still runs") {
    Rng rng(47);
    auto c = random_psd(6, rng);
    Rng noise_rng(48);
    auto noisy = inject_noise_hermitian(c, -5.0, noise_rng);  // noise dominates
    auto eig = top_eigenvector(noisy);
    auto cv = cmat_matvec(noisy, eig.vector);
    double res = 0;
    for (std::size_t i = 0; i < cv.size(); ++i) res += std::norm(cv[i] - eig.value * eig.vector[i]);
    CHECK(std::sqrt(res) <= 1e-8 * std::max(1.0, std::abs(eig.value)));
}
