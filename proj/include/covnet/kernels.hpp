#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

// Dense matrix kernels on raw row-major buffers. Loop orders are fixed so
// floating-point accumulation order is identical from run to run. Inner
// loops are element-independent axpy updates, which autovectorize without
// any reassociation flags.

namespace covnet::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate = false) {
    if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m * n));
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + i * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T* bp = b + p * n;
            const T x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
            for (std::int64_t j = 0; j < n; ++j) {
                const T bv = bp[j];
                c0[j] += x0 * bv;
                c1[j] += x1 * bv;
                c2[j] += x2 * bv;
                c3[j] += x3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T x = ai[p];
            const T* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += x * bp[j];
        }
    }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T.  B is transposed into scratch and the
// product runs through the same axpy loops as gemm_nn; a row-dot formulation
// would be a serial reduction the compiler cannot vectorize.
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate = false) {
    std::vector<T> bt(static_cast<std::size_t>(k * n));
    for (std::int64_t j = 0; j < n; ++j)
        for (std::int64_t p = 0; p < k; ++p) bt[static_cast<std::size_t>(p * n + j)] = b[j * k + p];
    gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

// C[m x n] (+)= A[k x m]^T * B[k x n]   (sequence of rank-1 updates)
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate = false) {
    if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m * n));
    for (std::int64_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T x = ap[i];
            T* ci = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += x * bp[j];
        }
    }
}

} // namespace covnet::kernels
