#pragma once

#include <complex>
#include <cstdint>
#include <vector>

// Row-major complex matrices for the signal-processing side (channel
// synthesis, DFTs, covariance). The learned network never sees complex
// values; everything crosses into the tensor engine via real/imag stacking.

namespace covnet {

using cx = std::complex<double>;

struct CMat {
    std::int64_t rows = 0, cols = 0;
    std::vector<cx> a;

    CMat() = default;
    CMat(std::int64_t r, std::int64_t c) : rows(r), cols(c), a(static_cast<std::size_t>(r * c)) {}

    cx& at(std::int64_t i, std::int64_t j) { return a[static_cast<std::size_t>(i * cols + j)]; }
    const cx& at(std::int64_t i, std::int64_t j) const { return a[static_cast<std::size_t>(i * cols + j)]; }
    std::int64_t numel() const { return rows * cols; }
};

CMat cmat_identity(std::int64_t n);
CMat cmat_mul(const CMat& a, const CMat& b);            // A B
CMat cmat_mul_nh(const CMat& a, const CMat& b);         // A Bᴴ
CMat cmat_hermitian(const CMat& a);                     // Aᴴ
CMat cmat_add(const CMat& a, const CMat& b);
CMat cmat_scale(const CMat& a, cx s);
double frob_norm_sq(const CMat& a);
double frob_norm(const CMat& a);
double hermitian_deviation(const CMat& a);              // max |a_ij - conj(a_ji)|
bool is_hermitian(const CMat& a, double tol = 1e-9);

// y = A x for column vector x (length a.cols)
std::vector<cx> cmat_matvec(const CMat& a, const std::vector<cx>& x);

} // namespace covnet
