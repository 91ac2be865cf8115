#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "covnet/kernels.hpp"
#include "covnet/tensor.hpp"

// Reverse-mode ops. Every op builds a fresh output tensor; when any input
// carries a tape node the op records a TapeNode whose closure captures the
// inputs (and forward results where the derivative needs them). Closures
// hold `self` as a raw pointer — the node owns the closure, so a shared_ptr
// there would cycle and the per-step graphs would never free.
//
// Gradient accumulation order is fixed by the loops below, so repeated runs
// over the same graph produce bit-identical gradients.

namespace covnet::ops {

template <typename T>
bool recording(const Tensor<T>& a) { return a.requires_grad(); }

template <typename T, typename... Rest>
bool recording(const Tensor<T>& a, const Rest&... rest) { return a.requires_grad() || recording(rest...); }

template <typename T>
std::shared_ptr<TapeNode<T>> begin_node(const char* kind, const Tensor<T>& out,
                                        std::initializer_list<Tensor<T>> inputs) {
    auto n = std::make_shared<TapeNode<T>>();
    n->op_kind = kind;
    n->shape = out.shape();
    for (const auto& in : inputs)
        if (in.requires_grad()) n->inputs.push_back(in.node());
    return n;
}

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    auto t = Tensor<T>::from_data(a.shape(), std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("add", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn]() {
            if (an) an->accumulate(self->grad);
            if (bn) bn->accumulate(self->grad);
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    auto t = Tensor<T>::from_data(a.shape(), std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("sub", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn]() {
            if (an) an->accumulate(self->grad);
            if (bn) {
                auto& g = bn->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self->grad[i];
            }
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    auto t = Tensor<T>::from_data(a.shape(), std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("mul", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        Tensor<T> ac = a, bc = b;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, ac, bc]() {
            if (an) {
                auto& g = an->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * bc.data()[i];
            }
            if (bn) {
                auto& g = bn->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * ac.data()[i];
            }
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.data());
    for (auto& v : out) v *= c;
    auto t = Tensor<T>::from_data(a.shape(), std::move(out));
    if (recording(a)) {
        auto node = begin_node("scale", t, {a});
        auto an = a.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an, c]() {
            auto& g = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * c;
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) v = v > T(0) ? v : T(0);
    auto t = Tensor<T>::from_data(a.shape(), std::move(out));
    if (recording(a)) {
        auto node = begin_node("relu", t, {a});
        auto an = a.node();
        Tensor<T> ac = a;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, ac]() {
            auto& g = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (ac.data()[i] > T(0)) g[i] += self->grad[i];
        };
        t.attach_node(node);
    }
    return t;
}

// x[..., d] + b[d], broadcast over leading dims.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (b.rank() != 1 || x.rank() < 1 || x.shape().back() != b.dim(0))
        throw std::invalid_argument("add_bias: incompatible shapes " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t d = b.dim(0);
    const std::int64_t rows = x.numel() / d;
    std::vector<T> out(x.data());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < d; ++j) out[static_cast<std::size_t>(r * d + j)] += b.data()[static_cast<std::size_t>(j)];
    auto t = Tensor<T>::from_data(x.shape(), std::move(out));
    if (recording(x, b)) {
        auto node = begin_node("add_bias", t, {x, b});
        auto xn = x.node(); auto bn = b.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, bn, rows, d]() {
            if (xn) xn->accumulate(self->grad);
            if (bn) {
                auto& g = bn->grad_buffer();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < d; ++j) g[static_cast<std::size_t>(j)] += self->grad[static_cast<std::size_t>(r * d + j)];
            }
        };
        t.attach_node(node);
    }
    return t;
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape target) {
    if (shape_numel(target) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(target));
    auto t = Tensor<T>::from_data(std::move(target), a.data());
    if (recording(a)) {
        auto node = begin_node("reshape", t, {a});
        auto an = a.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an]() { an->accumulate(self->grad); };
        t.attach_node(node);
    }
    return t;
}

// [..., m, n] -> [..., n, m]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    if (a.rank() < 2) throw std::invalid_argument("transpose_last2: rank must be >= 2");
    Shape s = a.shape();
    const std::int64_t m = s[s.size() - 2], n = s[s.size() - 1];
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    const std::int64_t batch = a.numel() / (m * n);
    std::vector<T> out(static_cast<std::size_t>(a.numel()));
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* src = a.data().data() + b * m * n;
        T* dst = out.data() + b * m * n;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
    auto t = Tensor<T>::from_data(std::move(s), std::move(out));
    if (recording(a)) {
        auto node = begin_node("transpose_last2", t, {a});
        auto an = a.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an, batch, m, n]() {
            auto& g = an->grad_buffer();
            for (std::int64_t b = 0; b < batch; ++b) {
                const T* src = self->grad.data() + b * m * n;
                T* dst = g.data() + b * m * n;
                for (std::int64_t j = 0; j < n; ++j)
                    for (std::int64_t i = 0; i < m; ++i) dst[i * n + j] += src[j * m + i];
            }
        };
        t.attach_node(node);
    }
    return t;
}

// [B, s, d] -> [B*H, s, d/H]; head h of sample b lands at batch index b*H + h.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::int64_t heads) {
    if (x.rank() != 3 || x.dim(2) % heads != 0)
        throw std::invalid_argument("split_heads: need [B,s,d] with d divisible by heads, got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), s = x.dim(1), d = x.dim(2), dh = d / heads;
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < s; ++i)
                for (std::int64_t k = 0; k < dh; ++k)
                    out[static_cast<std::size_t>((((b * heads + h) * s) + i) * dh + k)] =
                        x.data()[static_cast<std::size_t>((b * s + i) * d + h * dh + k)];
    auto t = Tensor<T>::from_data({B * heads, s, dh}, std::move(out));
    if (recording(x)) {
        auto node = begin_node("split_heads", t, {x});
        auto xn = x.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, B, heads, s, d, dh]() {
            auto& g = xn->grad_buffer();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t i = 0; i < s; ++i)
                        for (std::int64_t k = 0; k < dh; ++k)
                            g[static_cast<std::size_t>((b * s + i) * d + h * dh + k)] +=
                                self->grad[static_cast<std::size_t>((((b * heads + h) * s) + i) * dh + k)];
        };
        t.attach_node(node);
    }
    return t;
}

// [B*H, s, dh] -> [B, s, H*dh]; inverse of split_heads.
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::int64_t heads) {
    if (x.rank() != 3 || x.dim(0) % heads != 0)
        throw std::invalid_argument("merge_heads: need [B*H,s,dh], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0) / heads, s = x.dim(1), dh = x.dim(2), d = heads * dh;
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < s; ++i)
                for (std::int64_t k = 0; k < dh; ++k)
                    out[static_cast<std::size_t>((b * s + i) * d + h * dh + k)] =
                        x.data()[static_cast<std::size_t>((((b * heads + h) * s) + i) * dh + k)];
    auto t = Tensor<T>::from_data({B, s, d}, std::move(out));
    if (recording(x)) {
        auto node = begin_node("merge_heads", t, {x});
        auto xn = x.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, B, heads, s, d, dh]() {
            auto& g = xn->grad_buffer();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t i = 0; i < s; ++i)
                        for (std::int64_t k = 0; k < dh; ++k)
                            g[static_cast<std::size_t>((((b * heads + h) * s) + i) * dh + k)] +=
                                self->grad[static_cast<std::size_t>((b * s + i) * d + h * dh + k)];
        };
        t.attach_node(node);
    }
    return t;
}

// Concatenate along the last axis; leading dims must match.
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || a.rank() < 1)
        throw std::invalid_argument("concat_last: rank mismatch");
    for (std::size_t i = 0; i + 1 < a.rank(); ++i)
        if (a.dim(i) != b.dim(i))
            throw std::invalid_argument("concat_last: leading dims differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t da = a.shape().back(), db = b.shape().back();
    const std::int64_t rows = a.numel() / da;
    Shape s = a.shape();
    s.back() = da + db;
    std::vector<T> out(static_cast<std::size_t>(rows * (da + db)));
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy_n(a.data().data() + r * da, da, out.data() + r * (da + db));
        std::copy_n(b.data().data() + r * db, db, out.data() + r * (da + db) + da);
    }
    auto t = Tensor<T>::from_data(std::move(s), std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("concat_last", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, rows, da, db]() {
            if (an) {
                auto& g = an->grad_buffer();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < da; ++j) g[static_cast<std::size_t>(r * da + j)] += self->grad[static_cast<std::size_t>(r * (da + db) + j)];
            }
            if (bn) {
                auto& g = bn->grad_buffer();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < db; ++j) g[static_cast<std::size_t>(r * db + j)] += self->grad[static_cast<std::size_t>(r * (da + db) + da + j)];
            }
        };
        t.attach_node(node);
    }
    return t;
}

// Concat [B,Ca,H,W] with [B,Cb,H,W] along the channel axis. Channels are
// contiguous per sample in row-major order, so this is concat_last in disguise.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: incompatible " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    auto flat = concat_last(reshape(a, {n, ca * h * w}), reshape(b, {n, cb * h * w}));
    return reshape(flat, {n, ca + cb, h, w});
}

// ---- matrix products ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<T> out(static_cast<std::size_t>(M * N));
    kernels::gemm_nn(M, N, K, a.data().data(), b.data().data(), out.data());
    auto t = Tensor<T>::from_data({M, N}, std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("matmul", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        Tensor<T> ac = a, bc = b;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, ac, bc, M, N, K]() {
            if (an) kernels::gemm_nt(M, K, N, self->grad.data(), bc.data().data(), an->grad_buffer().data(), true);
            if (bn) kernels::gemm_tn(K, N, M, ac.data().data(), self->grad.data(), bn->grad_buffer().data(), true);
        };
        t.attach_node(node);
    }
    return t;
}

// a[M,K] x b[N,K]^T -> [M,N]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("matmul_nt: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(0);
    std::vector<T> out(static_cast<std::size_t>(M * N));
    kernels::gemm_nt(M, N, K, a.data().data(), b.data().data(), out.data());
    auto t = Tensor<T>::from_data({M, N}, std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("matmul_nt", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        Tensor<T> ac = a, bc = b;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, ac, bc, M, N, K]() {
            if (an) kernels::gemm_nn(M, K, N, self->grad.data(), bc.data().data(), an->grad_buffer().data(), true);
            if (bn) kernels::gemm_tn(N, K, M, self->grad.data(), ac.data().data(), bn->grad_buffer().data(), true);
        };
        t.attach_node(node);
    }
    return t;
}

// batched: a[B,M,K] x b[B,K,N] -> [B,M,N]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw std::invalid_argument("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    std::vector<T> out(static_cast<std::size_t>(B * M * N));
    for (std::int64_t i = 0; i < B; ++i)
        kernels::gemm_nn(M, N, K, a.data().data() + i * M * K, b.data().data() + i * K * N, out.data() + i * M * N);
    auto t = Tensor<T>::from_data({B, M, N}, std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("bmm", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        Tensor<T> ac = a, bc = b;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, ac, bc, B, M, N, K]() {
            for (std::int64_t i = 0; i < B; ++i) {
                const T* g = self->grad.data() + i * M * N;
                if (an) kernels::gemm_nt(M, K, N, g, bc.data().data() + i * K * N, an->grad_buffer().data() + i * M * K, true);
                if (bn) kernels::gemm_tn(K, N, M, ac.data().data() + i * M * K, g, bn->grad_buffer().data() + i * K * N, true);
            }
        };
        t.attach_node(node);
    }
    return t;
}

// batched: a[B,M,K] x b[B,N,K]^T -> [B,M,N]
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw std::invalid_argument("bmm_nt: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    const std::int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    std::vector<T> out(static_cast<std::size_t>(B * M * N));
    for (std::int64_t i = 0; i < B; ++i)
        kernels::gemm_nt(M, N, K, a.data().data() + i * M * K, b.data().data() + i * N * K, out.data() + i * M * N);
    auto t = Tensor<T>::from_data({B, M, N}, std::move(out));
    if (recording(a, b)) {
        auto node = begin_node("bmm_nt", t, {a, b});
        auto an = a.node(); auto bn = b.node();
        Tensor<T> ac = a, bc = b;
        TapeNode<T>* self = node.get();
        node->backward = [self, an, bn, ac, bc, B, M, N, K]() {
            for (std::int64_t i = 0; i < B; ++i) {
                const T* g = self->grad.data() + i * M * N;
                if (an) kernels::gemm_nn(M, K, N, g, bc.data().data() + i * N * K, an->grad_buffer().data() + i * M * K, true);
                if (bn) kernels::gemm_tn(N, K, M, g, ac.data().data() + i * M * K, bn->grad_buffer().data() + i * N * K, true);
            }
        };
        t.attach_node(node);
    }
    return t;
}

// x[..., d_in] x w[d_in, d_out] + b[d_out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (w.rank() != 2 || x.shape().back() != w.dim(0))
        throw std::invalid_argument("linear: incompatible " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    Shape out_shape = x.shape();
    out_shape.back() = w.dim(1);
    auto flat = reshape(x, {x.numel() / x.shape().back(), x.shape().back()});
    auto y = add_bias(matmul(flat, w), b);
    return reshape(y, std::move(out_shape));
}

// ---- normalization / softmax ----

// Row softmax over the last axis. With causal=true the last two axes must be
// square [s,s] and row i only attends to columns 0..i; masked entries come
// out exactly zero.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, bool causal = false) {
    if (x.rank() < 1) throw std::invalid_argument("softmax_rows: rank must be >= 1");
    const std::int64_t n = x.shape().back();
    const std::int64_t rows = x.numel() / n;
    if (causal) {
        if (x.rank() < 2 || x.shape()[x.rank() - 2] != n)
            throw std::invalid_argument("softmax_rows: causal mask needs square last two dims, got " + shape_str(x.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.data().data() + r * n;
        T* dst = out.data() + r * n;
        const std::int64_t allowed = causal ? (r % n) + 1 : n;
        T mx = src[0];
        for (std::int64_t j = 1; j < allowed; ++j) mx = std::max(mx, src[j]);
        T denom = T(0);
        for (std::int64_t j = 0; j < allowed; ++j) {
            dst[j] = std::exp(src[j] - mx);
            denom += dst[j];
        }
        for (std::int64_t j = 0; j < allowed; ++j) dst[j] /= denom;
        for (std::int64_t j = allowed; j < n; ++j) dst[j] = T(0);
    }
    auto t = Tensor<T>::from_data(x.shape(), std::move(out));
    if (recording(x)) {
        auto node = begin_node(causal ? "causal_softmax" : "softmax", t, {x});
        auto xn = x.node();
        std::vector<T> y = t.data();  // backward needs the probabilities
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, y, rows, n]() {
            auto& g = xn->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* yr = y.data() + r * n;
                const T* gy = self->grad.data() + r * n;
                T dot = T(0);
                for (std::int64_t j = 0; j < n; ++j) dot += gy[j] * yr[j];
                for (std::int64_t j = 0; j < n; ++j) g[static_cast<std::size_t>(r * n + j)] += yr[j] * (gy[j] - dot);
            }
        };
        t.attach_node(node);
    }
    return t;
}

// LayerNorm over the last axis with affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const std::int64_t d = x.shape().back();
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw std::invalid_argument("layer_norm: gamma/beta must be [d]=" + std::to_string(d));
    const std::int64_t rows = x.numel() / d;
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
    std::vector<T> inv_std(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.data().data() + r * d;
        T mu = T(0);
        for (std::int64_t j = 0; j < d; ++j) mu += src[j];
        mu /= T(d);
        T var = T(0);
        for (std::int64_t j = 0; j < d; ++j) { T c = src[j] - mu; var += c * c; }
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            const T xh = (src[j] - mu) * is;
            xhat[static_cast<std::size_t>(r * d + j)] = xh;
            out[static_cast<std::size_t>(r * d + j)] = xh * gamma.data()[static_cast<std::size_t>(j)] + beta.data()[static_cast<std::size_t>(j)];
        }
    }
    auto t = Tensor<T>::from_data(x.shape(), std::move(out));
    if (recording(x, gamma, beta)) {
        auto node = begin_node("layer_norm", t, {x, gamma, beta});
        auto xn = x.node(); auto gn = gamma.node(); auto bn = beta.node();
        Tensor<T> gc = gamma;
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, gn, bn, gc, xhat, inv_std, rows, d]() {
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* gy = self->grad.data() + r * d;
                const T* xh = xhat.data() + r * d;
                if (gn) {
                    auto& g = gn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) g[static_cast<std::size_t>(j)] += gy[j] * xh[j];
                }
                if (bn) {
                    auto& g = bn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) g[static_cast<std::size_t>(j)] += gy[j];
                }
                if (xn) {
                    auto& g = xn->grad_buffer();
                    T m1 = T(0), m2 = T(0);
                    for (std::int64_t j = 0; j < d; ++j) {
                        const T dxh = gy[j] * gc.data()[static_cast<std::size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= T(d);
                    m2 /= T(d);
                    const T is = inv_std[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < d; ++j) {
                        const T dxh = gy[j] * gc.data()[static_cast<std::size_t>(j)];
                        g[static_cast<std::size_t>(r * d + j)] += is * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        };
        t.attach_node(node);
    }
    return t;
}

// ---- conv / pooling (NCHW) ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::int64_t stride, std::int64_t pad) {
    if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: need x[B,Cin,H,W], w[Cout,Cin,kh,kw]; got " + shape_str(x.shape()) + ", " + shape_str(w.shape()));
    const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (b.rank() != 1 || b.dim(0) != Cout) throw std::invalid_argument("conv2d: bias must be [Cout]");
    const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
    std::vector<T> out(static_cast<std::size_t>(B * Cout * Ho * Wo));
    const T* xd = x.data().data();
    const T* wd = w.data().data();
    for (std::int64_t n = 0; n < B; ++n)
        for (std::int64_t co = 0; co < Cout; ++co)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    T acc = b.data()[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < Cin; ++ci)
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                acc += xd[((n * Cin + ci) * H + iy) * W + ix] * wd[((co * Cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    out[static_cast<std::size_t>(((n * Cout + co) * Ho + oy) * Wo + ox)] = acc;
                }
    auto t = Tensor<T>::from_data({B, Cout, Ho, Wo}, std::move(out));
    if (recording(x, w, b)) {
        auto node = begin_node("conv2d", t, {x, w, b});
        auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
        Tensor<T> xc = x, wc = w;
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, wn, bn, xc, wc, B, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad]() {
            const T* xd = xc.data().data();
            const T* wd = wc.data().data();
            for (std::int64_t n = 0; n < B; ++n)
                for (std::int64_t co = 0; co < Cout; ++co)
                    for (std::int64_t oy = 0; oy < Ho; ++oy)
                        for (std::int64_t ox = 0; ox < Wo; ++ox) {
                            const T g = self->grad[static_cast<std::size_t>(((n * Cout + co) * Ho + oy) * Wo + ox)];
                            if (bn) bn->grad_buffer()[static_cast<std::size_t>(co)] += g;
                            for (std::int64_t ci = 0; ci < Cin; ++ci)
                                for (std::int64_t ky = 0; ky < kh; ++ky) {
                                    const std::int64_t iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                                        const std::int64_t ix = ox * stride + kx - pad;
                                        if (ix < 0 || ix >= W) continue;
                                        if (wn) wn->grad_buffer()[static_cast<std::size_t>(((co * Cin + ci) * kh + ky) * kw + kx)] +=
                                            g * xd[((n * Cin + ci) * H + iy) * W + ix];
                                        if (xn) xn->grad_buffer()[static_cast<std::size_t>(((n * Cin + ci) * H + iy) * W + ix)] +=
                                            g * wd[((co * Cin + ci) * kh + ky) * kw + kx];
                                    }
                                }
                        }
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride) {
    if (x.rank() != 4) throw std::invalid_argument("maxpool2d: need [B,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("maxpool2d: empty output");
    std::vector<T> out(static_cast<std::size_t>(B * C * Ho * Wo));
    std::vector<std::int64_t> argmax(out.size());
    const T* xd = x.data().data();
    for (std::int64_t n = 0; n < B; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = 0;
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t idx = ((n * C + c) * H + oy * stride + ky) * W + ox * stride + kx;
                            if (xd[idx] > best) { best = xd[idx]; best_idx = idx; }
                        }
                    const std::size_t o = static_cast<std::size_t>(((n * C + c) * Ho + oy) * Wo + ox);
                    out[o] = best;
                    argmax[o] = best_idx;
                }
    auto t = Tensor<T>::from_data({B, C, Ho, Wo}, std::move(out));
    if (recording(x)) {
        auto node = begin_node("maxpool2d", t, {x});
        auto xn = x.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, argmax]() {
            auto& g = xn->grad_buffer();
            for (std::size_t o = 0; o < argmax.size(); ++o) g[static_cast<std::size_t>(argmax[o])] += self->grad[o];
        };
        t.attach_node(node);
    }
    return t;
}

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: need [B,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> out(static_cast<std::size_t>(B * C));
    for (std::int64_t n = 0; n < B; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            T acc = T(0);
            const T* src = x.data().data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) acc += src[i];
            out[static_cast<std::size_t>(n * C + c)] = acc / T(HW);
        }
    auto t = Tensor<T>::from_data({B, C}, std::move(out));
    if (recording(x)) {
        auto node = begin_node("global_avg_pool", t, {x});
        auto xn = x.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn, B, C, HW]() {
            auto& g = xn->grad_buffer();
            for (std::int64_t n = 0; n < B; ++n)
                for (std::int64_t c = 0; c < C; ++c) {
                    const T gy = self->grad[static_cast<std::size_t>(n * C + c)] / T(HW);
                    T* dst = g.data() + (n * C + c) * HW;
                    for (std::int64_t i = 0; i < HW; ++i) dst[i] += gy;
                }
        };
        t.attach_node(node);
    }
    return t;
}

// ---- reductions / losses ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    for (auto v : x.data()) acc += v;
    auto t = Tensor<T>::scalar_value(acc);
    if (recording(x)) {
        auto node = begin_node("sum_all", t, {x});
        auto xn = x.node();
        TapeNode<T>* self = node.get();
        node->backward = [self, xn]() {
            auto& g = xn->grad_buffer();
            for (auto& v : g) v += self->grad[0];
        };
        t.attach_node(node);
    }
    return t;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / T(x.numel()));
}

// mean over all elements of (pred - target)^2
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const std::int64_t N = pred.numel();
    T acc = T(0);
    for (std::int64_t i = 0; i < N; ++i) {
        const T d = pred.data()[static_cast<std::size_t>(i)] - target.data()[static_cast<std::size_t>(i)];
        acc += d * d;
    }
    auto t = Tensor<T>::scalar_value(acc / T(N));
    if (recording(pred, target)) {
        auto node = begin_node("mse_loss", t, {pred, target});
        auto pn = pred.node(); auto tn = target.node();
        Tensor<T> pc = pred, tc = target;
        TapeNode<T>* self = node.get();
        node->backward = [self, pn, tn, pc, tc, N]() {
            const T c = T(2) / T(N) * self->grad[0];
            if (pn) {
                auto& g = pn->grad_buffer();
                for (std::int64_t i = 0; i < N; ++i)
                    g[static_cast<std::size_t>(i)] += c * (pc.data()[static_cast<std::size_t>(i)] - tc.data()[static_cast<std::size_t>(i)]);
            }
            if (tn) {
                auto& g = tn->grad_buffer();
                for (std::int64_t i = 0; i < N; ++i)
                    g[static_cast<std::size_t>(i)] -= c * (pc.data()[static_cast<std::size_t>(i)] - tc.data()[static_cast<std::size_t>(i)]);
            }
        };
        t.attach_node(node);
    }
    return t;
}

} // namespace covnet::ops
