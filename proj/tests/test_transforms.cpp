#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "covnet/rng.hpp"
#include "covnet/transforms.hpp"

using namespace covnet;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

CMat random_cmat(std::int64_t r, std::int64_t c, Rng& rng) {
    CMat m(r, c);
    for (auto& v : m.a) v = cx(rng.gaussian(), rng.gaussian());
    return m;
}

// independent oracle: every output entry as an explicit double sum,
// with the kernels rebuilt from their formulas
CMat oracle_angle_delay(const CMat& h) {
    const std::int64_t nc = h.rows, nt = h.cols;
    CMat out(nc, nt);
    for (std::int64_t m = 0; m < nc; ++m)
        for (std::int64_t q = 0; q < nt; ++q) {
            cx acc = 0;
            for (std::int64_t i = 0; i < nc; ++i)
                for (std::int64_t p = 0; p < nt; ++p) {
                    const cx fd = std::exp(cx(0, 2 * kPi * double(m) * double(i) / double(nc))) / std::sqrt(double(nc));
                    const cx fa = std::exp(cx(0, -2 * kPi * double(q) * double(p) / double(nt))) / std::sqrt(double(nt));
                    acc += fd * h.at(i, p) * std::conj(fa);
                }
            out.at(m, q) = acc;
        }
    return out;
}

double max_abs_diff(const CMat& a, const CMat& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double worst = 0;
    for (std::size_t i = 0; i < a.a.size(); ++i) worst = std::max(worst, std::abs(a.a[i] - b.a[i]));
    return worst;
}

}  // namespace

TEST_CASE("2D transform matches the double-sum oracle") {
    Rng rng(21);
    for (auto [nc, nt] : {std::pair<int, int>{8, 4}, {16, 8}, {12, 12}}) {
        auto h = random_cmat(nc, nt, rng);
        CHECK(max_abs_diff(to_angle_delay(h), oracle_angle_delay(h)) < 1e-10);
    }
}

TEST_CASE("transform factors are unitary; energy is preserved to 1e-9") {
    for (auto n : {4, 16, 32}) {
        for (const CMat& f : {delay_dft(n), spatial_dft(n)}) {
            auto gram = cmat_mul_nh(f, f);
            auto eye = cmat_identity(n);
            CHECK(max_abs_diff(gram, eye) < 1e-12);
        }
    }
    Rng rng(22);
    auto h = random_cmat(64, 16, rng);
    CHECK(std::abs(frob_norm(to_angle_delay(h)) - frob_norm(h)) < 1e-9);
}

TEST_CASE("full-size roundtrip is the identity to 1e-9") {
    Rng rng(23);
    auto h = random_cmat(32, 8, rng);
    auto back = from_angle_delay(to_angle_delay(h), 32);
    CHECK(max_abs_diff(back, h) < 1e-9);
}

TEST_CASE("truncated roundtrip error equals the discarded tail energy") {
    Rng rng(24);
    auto h = random_cmat(32, 8, rng);
    const std::int64_t n_a = 12;
    auto full = to_angle_delay(h);
    auto trunc = truncate_rows(full, n_a);
    auto back = from_angle_delay(trunc, 32);
    double tail = 0;
    for (std::int64_t r = n_a; r < 32; ++r)
        for (std::int64_t c = 0; c < 8; ++c) tail += std::norm(full.at(r, c));
    double err = 0;
    for (std::size_t i = 0; i < h.a.size(); ++i) err += std::norm(back.a[i] - h.a[i]);
    CHECK(err == doctest::Approx(tail).epsilon(1e-9));
}

TEST_CASE("fused truncated transform equals truncate(full transform)") {
    Rng rng(25);
    auto h = random_cmat(24, 6, rng);
    CHECK(max_abs_diff(to_angle_delay_truncated(h, 7), truncate_rows(to_angle_delay(h), 7)) < 1e-12);
}

TEST_CASE("delay-axis kernel sign places small delays in the leading rows") {
    // single path at delay tau: h_i,p = e^{-2pi*j*tau*i/nc}; the transform
    // must concentrate its energy in row round(tau)
    const std::int64_t nc = 32, nt = 4;
    const double tau = 3.0;
    CMat h(nc, nt);
    for (std::int64_t i = 0; i < nc; ++i)
        for (std::int64_t p = 0; p < nt; ++p)
            h.at(i, p) = std::exp(cx(0, -2 * kPi * tau * double(i) / double(nc)));
    auto ha = to_angle_delay(h);
    std::int64_t best_row = 0;
    double best = -1;
    for (std::int64_t r = 0; r < nc; ++r) {
        double e = 0;
        for (std::int64_t c = 0; c < nt; ++c) e += std::norm(ha.at(r, c));
        if (e > best) {
            best = e;
            best_row = r;
        }
    }
    CHECK(best_row == 3);
}

TEST_CASE("nmse metric: identity, scaling, and the -inf sentinel") {
    Rng rng(26);
    auto h = random_cmat(6, 5, rng);
    CHECK(nmse_linear(h, h) == 0.0);
    CHECK(nmse_db(nmse_linear(h, h)) == kNmseNegInfDb);
    auto half = cmat_scale(h, 0.5);
    CHECK(nmse_linear(h, half) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(nmse_db(0.01) == doctest::Approx(-20.0).epsilon(1e-12));
    CHECK(nmse_db(1.0) == 0.0);
}

TEST_CASE("compression-ratio arithmetic matches the published grid") {
    const std::int64_t want[] = {64, 32, 16, 8};
    const std::int64_t crs[] = {32, 64, 128, 256};
    for (int i = 0; i < 4; ++i) {
        CHECK(cr_to_codeword_len(32, 32, crs[i]) == want[i]);
        CHECK(codeword_len_to_cr(32, 32, want[i]) == crs[i]);
    }
    CHECK_THROWS_AS(cr_to_codeword_len(32, 32, 100), std::invalid_argument);
    CHECK_THROWS_AS(cr_to_codeword_len(32, 32, 0), std::invalid_argument);
}

TEST_CASE("stacked-real row convention round-trips") {
    Rng rng(27);
    auto h = random_cmat(5, 7, rng);
    auto stacked = stack_real<float>(h);
    REQUIRE(stacked.size() == 70);
    // first half holds real parts, second half imaginary parts
    CHECK(stacked[0] == doctest::Approx(h.at(0, 0).real()));
    CHECK(stacked[35] == doctest::Approx(h.at(0, 0).imag()));
    auto back = unstack_real<float>(5, 7, stacked);
    CHECK(max_abs_diff(back, h) < 1e-6);
    CHECK_THROWS_AS(unstack_real<float>(4, 7, stacked), std::invalid_argument);
}
