#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "covnet/kernels.hpp"
#include "covnet/rng.hpp"

using namespace covnet;

namespace {

// independent oracle: textbook triple loop, same (i,j,k) accumulation order
template <typename T>
std::vector<T> naive_nn(std::int64_t m, std::int64_t n, std::int64_t k, const std::vector<T>& a,
                        const std::vector<T>& b) {
    std::vector<T> c(static_cast<std::size_t>(m * n), T(0));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t kk = 0; kk < k; ++kk)
            for (std::int64_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + kk] * b[kk * n + j];
    return c;
}

template <typename T>
std::vector<T> randvec(std::int64_t n, Rng& rng) {
    std::vector<T> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
    return v;
}

template <typename T>
double max_rel_err(const std::vector<T>& got, const std::vector<T>& want) {
    REQUIRE(got.size() == want.size());
    double worst = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double g = static_cast<double>(got[i]), w = static_cast<double>(want[i]);
        worst = std::max(worst, std::abs(g - w) / std::max(1.0, std::abs(w)));
    }
    return worst;
}

}  // namespace

TEST_CASE_TEMPLATE("gemm_nn matches triple-loop oracle", T, float, double) {
    Rng rng(42);
    for (auto [m, n, k] : {std::tuple<int, int, int>{1, 1, 1}, {3, 5, 7}, {16, 16, 16}, {33, 17, 9}, {2, 64, 31}}) {
        auto a = randvec<T>(m * k, rng);
        auto b = randvec<T>(k * n, rng);
        std::vector<T> c(static_cast<std::size_t>(m * n));
        kernels::gemm_nn(m, n, k, a.data(), b.data(), c.data());
        CHECK(max_rel_err(c, naive_nn<T>(m, n, k, a, b)) < (sizeof(T) == 4 ? 1e-5 : 1e-13));
    }
}

TEST_CASE_TEMPLATE("gemm_nt matches oracle on explicit transpose", T, float, double) {
    Rng rng(43);
    for (auto [m, n, k] : {std::tuple<int, int, int>{1, 2, 3}, {5, 7, 4}, {12, 9, 33}}) {
        auto a = randvec<T>(m * k, rng);
        auto b = randvec<T>(n * k, rng);  // B is n x k, used as Bᵀ
        std::vector<T> bt(static_cast<std::size_t>(k * n));
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < k; ++j) bt[j * n + i] = b[i * k + j];
        std::vector<T> c(static_cast<std::size_t>(m * n));
        kernels::gemm_nt(m, n, k, a.data(), b.data(), c.data());
        CHECK(max_rel_err(c, naive_nn<T>(m, n, k, a, bt)) < (sizeof(T) == 4 ? 1e-5 : 1e-13));
    }
}

TEST_CASE_TEMPLATE("gemm_tn matches oracle on explicit transpose", T, float, double) {
    Rng rng(44);
    for (auto [m, n, k] : {std::tuple<int, int, int>{2, 2, 2}, {6, 11, 5}, {31, 8, 13}}) {
        auto a = randvec<T>(k * m, rng);  // A is k x m, used as Aᵀ
        auto b = randvec<T>(k * n, rng);
        std::vector<T> at(static_cast<std::size_t>(m * k));
        for (std::int64_t i = 0; i < k; ++i)
            for (std::int64_t j = 0; j < m; ++j) at[j * k + i] = a[i * m + j];
        std::vector<T> c(static_cast<std::size_t>(m * n));
        kernels::gemm_tn(m, n, k, a.data(), b.data(), c.data());
        CHECK(max_rel_err(c, naive_nn<T>(m, n, k, at, b)) < (sizeof(T) == 4 ? 1e-5 : 1e-13));
    }
}

TEST_CASE("accumulate flag adds instead of overwriting") {
    Rng rng(45);
    const std::int64_t m = 4, n = 6, k = 5;
    auto a = randvec<double>(m * k, rng);
    auto b = randvec<double>(k * n, rng);
    std::vector<double> base = randvec<double>(m * n, rng);
    auto expect = naive_nn<double>(m, n, k, a, b);
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += base[i];
    auto c = base;
    kernels::gemm_nn(m, n, k, a.data(), b.data(), c.data(), /*accumulate=*/true);
    CHECK(max_rel_err(c, expect) < 1e-13);
    // default overwrites
    c = base;
    kernels::gemm_nn(m, n, k, a.data(), b.data(), c.data());
    CHECK(max_rel_err(c, naive_nn<double>(m, n, k, a, b)) < 1e-13);
}

TEST_CASE("gemm determinism: same inputs, same bits") {
    Rng rng(46);
    const std::int64_t m = 17, n = 23, k = 31;
    auto a = randvec<float>(m * k, rng);
    auto b = randvec<float>(k * n, rng);
    std::vector<float> c1(static_cast<std::size_t>(m * n)), c2(static_cast<std::size_t>(m * n));
    kernels::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
    kernels::gemm_nn(m, n, k, a.data(), b.data(), c2.data());
    CHECK(c1 == c2);
}
