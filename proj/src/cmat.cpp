#include "covnet/cmat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace covnet {

namespace {
void check_same_shape(const CMat& a, const CMat& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols));
}
} // namespace

CMat cmat_identity(std::int64_t n) {
    CMat m(n, n);
    for (std::int64_t i = 0; i < n; ++i) m.at(i, i) = cx(1, 0);
    return m;
}

CMat cmat_mul(const CMat& a, const CMat& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("cmat_mul: inner extents " + std::to_string(a.cols) + " vs " + std::to_string(b.rows));
    CMat c(a.rows, b.cols);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t p = 0; p < a.cols; ++p) {
            const cx av = a.at(i, p);
            if (av == cx(0, 0)) continue;
            for (std::int64_t j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(p, j);
        }
    return c;
}

CMat cmat_mul_nh(const CMat& a, const CMat& b) {
    if (a.cols != b.cols)
        throw std::invalid_argument("cmat_mul_nh: inner extents " + std::to_string(a.cols) + " vs " + std::to_string(b.cols));
    CMat c(a.rows, b.rows);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j < b.rows; ++j) {
            cx acc(0, 0);
            for (std::int64_t p = 0; p < a.cols; ++p) acc += a.at(i, p) * std::conj(b.at(j, p));
            c.at(i, j) = acc;
        }
    return c;
}

CMat cmat_hermitian(const CMat& a) {
    CMat c(a.cols, a.rows);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j < a.cols; ++j) c.at(j, i) = std::conj(a.at(i, j));
    return c;
}

CMat cmat_add(const CMat& a, const CMat& b) {
    check_same_shape(a, b, "cmat_add");
    CMat c = a;
    for (std::size_t i = 0; i < c.a.size(); ++i) c.a[i] += b.a[i];
    return c;
}

CMat cmat_scale(const CMat& a, cx s) {
    CMat c = a;
    for (auto& v : c.a) v *= s;
    return c;
}

double frob_norm_sq(const CMat& a) {
    double acc = 0;
    for (const auto& v : a.a) acc += std::norm(v);
    return acc;
}

double frob_norm(const CMat& a) { return std::sqrt(frob_norm_sq(a)); }

double hermitian_deviation(const CMat& a) {
    if (a.rows != a.cols) return std::numeric_limits<double>::infinity();
    double dev = 0;
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j <= i; ++j)
            dev = std::max(dev, std::abs(a.at(i, j) - std::conj(a.at(j, i))));
    return dev;
}

bool is_hermitian(const CMat& a, double tol) { return hermitian_deviation(a) <= tol; }

std::vector<cx> cmat_matvec(const CMat& a, const std::vector<cx>& x) {
    if (static_cast<std::int64_t>(x.size()) != a.cols)
        throw std::invalid_argument("cmat_matvec: length " + std::to_string(x.size()) + " vs cols " + std::to_string(a.cols));
    std::vector<cx> y(static_cast<std::size_t>(a.rows));
    for (std::int64_t i = 0; i < a.rows; ++i) {
        cx acc(0, 0);
        for (std::int64_t j = 0; j < a.cols; ++j) acc += a.at(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

} // namespace covnet
