#include "covnet/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace covnet {

CMat delay_dft(std::int64_t n) {
    CMat f(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::int64_t m = 0; m < n; ++m)
        for (std::int64_t i = 0; i < n; ++i) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((m * i) % n) / static_cast<double>(n);
            f.at(m, i) = cx(std::cos(ang) * scale, std::sin(ang) * scale);
        }
    return f;
}

CMat spatial_dft(std::int64_t n) {
    CMat f(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::int64_t k = 0; k < n; ++k)
        for (std::int64_t p = 0; p < n; ++p) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * p) % n) / static_cast<double>(n);
            f.at(k, p) = cx(std::cos(ang) * scale, std::sin(ang) * scale);
        }
    return f;
}

CMat to_angle_delay(const CMat& h_sf) {
    return cmat_mul_nh(cmat_mul(delay_dft(h_sf.rows), h_sf), spatial_dft(h_sf.cols));
}

CMat truncate_rows(const CMat& h_a, std::int64_t n_a) {
    if (n_a > h_a.rows)
        throw std::invalid_argument("truncate_rows: n_a " + std::to_string(n_a) + " exceeds rows " + std::to_string(h_a.rows));
    CMat h(n_a, h_a.cols);
    std::copy_n(h_a.a.begin(), static_cast<std::size_t>(n_a * h_a.cols), h.a.begin());
    return h;
}

CMat to_angle_delay_truncated(const CMat& h_sf, std::int64_t n_a) {
    if (n_a > h_sf.rows)
        throw std::invalid_argument("to_angle_delay_truncated: n_a exceeds N_c");
    const std::int64_t n_c = h_sf.rows, n_t = h_sf.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_c));
    // rows of F_d H̃, only the first n_a
    CMat tmp(n_a, n_t);
    for (std::int64_t m = 0; m < n_a; ++m)
        for (std::int64_t i = 0; i < n_c; ++i) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((m * i) % n_c) / static_cast<double>(n_c);
            const cx w(std::cos(ang) * scale, std::sin(ang) * scale);
            for (std::int64_t t = 0; t < n_t; ++t) tmp.at(m, t) += w * h_sf.at(i, t);
        }
    return cmat_mul_nh(tmp, spatial_dft(n_t));
}

CMat from_angle_delay(const CMat& h, std::int64_t n_c) {
    if (h.rows > n_c)
        throw std::invalid_argument("from_angle_delay: rows " + std::to_string(h.rows) + " exceed N_c " + std::to_string(n_c));
    CMat padded(n_c, h.cols);
    std::copy_n(h.a.begin(), h.a.size(), padded.a.begin());
    return cmat_mul(cmat_mul(cmat_hermitian(delay_dft(n_c)), padded), spatial_dft(h.cols));
}

double nmse_linear(const CMat& h_true, const CMat& h_hat) {
    if (h_true.rows != h_hat.rows || h_true.cols != h_hat.cols)
        throw std::invalid_argument("nmse: shape mismatch");
    const double denom = frob_norm_sq(h_true);
    if (denom <= 0.0) throw std::invalid_argument("nmse: zero-norm reference channel, metric undefined");
    double num = 0;
    for (std::size_t i = 0; i < h_true.a.size(); ++i) num += std::norm(h_true.a[i] - h_hat.a[i]);
    return num / denom;
}

double nmse_db(double linear) {
    if (linear < 0.0) throw std::invalid_argument("nmse_db: negative linear NMSE");
    if (linear == 0.0) return kNmseNegInfDb;
    return 10.0 * std::log10(linear);
}

std::int64_t cr_to_codeword_len(std::int64_t n_a, std::int64_t n_t, std::int64_t cr) {
    if (cr <= 0) throw std::invalid_argument("cr_to_codeword_len: CR must be positive");
    const std::int64_t raw = 2 * n_a * n_t;
    if (raw % cr != 0)
        throw std::invalid_argument("cr_to_codeword_len: CR " + std::to_string(cr) + " does not divide 2*N_a*N_t = " +
                                    std::to_string(raw) + " (codeword length would not be an integer)");
    return raw / cr;
}

std::int64_t codeword_len_to_cr(std::int64_t n_a, std::int64_t n_t, std::int64_t m) {
    if (m <= 0) throw std::invalid_argument("codeword_len_to_cr: M must be positive");
    const std::int64_t raw = 2 * n_a * n_t;
    if (raw % m != 0)
        throw std::invalid_argument("codeword_len_to_cr: M " + std::to_string(m) + " does not divide 2*N_a*N_t = " +
                                    std::to_string(raw));
    return raw / m;
}

} // namespace covnet
