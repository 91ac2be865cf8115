#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "covnet/cmat.hpp"

// Angle-delay domain transforms and metrics.
//
// The 2D transform is H_a = F_d H̃ F_aᴴ with both factors unitary. The
// delay-axis matrix F_d uses the conjugate (IDFT-sign) kernel
// exp(+2πj·mi/N_c)/√N_c: a path with delay τ contributes the subcarrier
// phase ramp e^{−j2πτi/N_c}, and this sign choice maps small τ to the
// leading rows of H_a, which is what makes truncation to the first N_a
// rows keep the multipath energy.

namespace covnet {

CMat delay_dft(std::int64_t n);                 // F_d, unitary, +j kernel
CMat spatial_dft(std::int64_t n);               // F_a, unitary, −j kernel

CMat to_angle_delay(const CMat& h_sf);          // N_c×N_t -> N_c×N_t
CMat truncate_rows(const CMat& h_a, std::int64_t n_a);
// Fused first-n_a-rows path; equals truncate_rows(to_angle_delay(h), n_a).
CMat to_angle_delay_truncated(const CMat& h_sf, std::int64_t n_a);
CMat from_angle_delay(const CMat& h, std::int64_t n_c);  // zero-pad + inverse

double nmse_linear(const CMat& h_true, const CMat& h_hat);
// 10·log10(linear); returns the documented −inf sentinel when linear == 0.
double nmse_db(double linear);
inline constexpr double kNmseNegInfDb = -std::numeric_limits<double>::infinity();

std::int64_t cr_to_codeword_len(std::int64_t n_a, std::int64_t n_t, std::int64_t cr);
std::int64_t codeword_len_to_cr(std::int64_t n_a, std::int64_t n_t, std::int64_t m);

// StackedReal convention: rows 0..N_a−1 real part, rows N_a..2N_a−1 imag.
template <typename T>
std::vector<T> stack_real(const CMat& h) {
    std::vector<T> out(static_cast<std::size_t>(2 * h.numel()));
    const std::size_t half = static_cast<std::size_t>(h.numel());
    for (std::size_t i = 0; i < half; ++i) {
        out[i] = static_cast<T>(h.a[i].real());
        out[half + i] = static_cast<T>(h.a[i].imag());
    }
    return out;
}

template <typename T>
CMat unstack_real(std::int64_t rows, std::int64_t cols, const std::vector<T>& stacked) {
    if (static_cast<std::int64_t>(stacked.size()) != 2 * rows * cols)
        throw std::invalid_argument("unstack_real: length " + std::to_string(stacked.size()) +
                                    " does not match 2x" + std::to_string(rows) + "x" + std::to_string(cols));
    CMat h(rows, cols);
    const std::size_t half = static_cast<std::size_t>(rows * cols);
    for (std::size_t i = 0; i < half; ++i)
        h.a[i] = cx(static_cast<double>(stacked[i]), static_cast<double>(stacked[half + i]));
    return h;
}

} // namespace covnet
