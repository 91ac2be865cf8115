#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "covnet/io.hpp"
#include "covnet/tensor.hpp"

namespace covnet {

// Named registry of trainable tensors. Registration order is the
// serialization order, so checkpoints round-trip losslessly.
template <typename T>
class ParameterStore {
public:
    Tensor<T>& add(const std::string& name, Shape shape) {
        if (index_.count(name))
            throw std::invalid_argument("params: duplicate parameter name '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back({name, Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true)});
        return entries_.back().tensor;
    }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("params: unknown parameter '" + name + "'");
        return entries_[it->second].tensor;
    }
    const Tensor<T>& at(const std::string& name) const { return const_cast<ParameterStore*>(this)->at(name); }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    Tensor<T>& tensor(std::size_t i) { return entries_[i].tensor; }
    const Tensor<T>& tensor(std::size_t i) const { return entries_[i].tensor; }

    std::int64_t total_scalars() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

private:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
    };
    // deque: references returned by add() stay valid as the store grows
    std::deque<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Glorot-uniform fill: bound sqrt(6/(fan_in+fan_out)).
template <typename T>
void init_glorot(Tensor<T>& w, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_const(Tensor<T>& w, T value) {
    for (auto& v : w.mutable_data()) v = value;
}

// Standard Adam with bias correction. Moment buffers are keyed by
// parameter index and persist across steps; parameters with no recorded
// gradient this step are skipped but keep their state.
template <typename T>
class Adam {
public:
    explicit Adam(T lr = T(1e-4), T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    std::int64_t step_count() const { return step_; }
    T learning_rate() const { return lr_; }

    void step(ParameterStore<T>& params) {
        if (state_.empty()) {
            state_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                const auto n = static_cast<std::size_t>(params.tensor(i).numel());
                state_[i].m.assign(n, T(0));
                state_[i].v.assign(n, T(0));
            }
        }
        if (state_.size() != params.size())
            throw std::invalid_argument("adam: parameter count changed between steps");
        ++step_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params.tensor(i);
            if (!p.has_grad()) continue;
            const auto& g = p.node()->grad;
            auto& m = state_[i].m;
            auto& v = state_[i].v;
            auto& w = p.mutable_data();
            if (g.size() != w.size())
                throw std::invalid_argument("adam: gradient shape mismatch on '" + params.name(i) + "'");
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    struct Moments {
        std::vector<T> m, v;
    };
    T lr_, beta1_, beta2_, eps_;
    std::int64_t step_ = 0;
    std::vector<Moments> state_;
};

// ---- checkpoint format ----
// magic "CVNT", version u32, param count u32, then per parameter:
// name length u16, name bytes, rank u8, extents u32 each, f32 row-major.

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'N', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParameterStore<T>& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    io::write_magic(f, kCheckpointMagic);
    io::write_le<std::uint32_t>(f, kCheckpointVersion);
    io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(params.size()));
    std::vector<float> buf;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.name(i);
        const auto& t = params.tensor(i);
        io::write_le<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_le<std::uint8_t>(f, static_cast<std::uint8_t>(t.rank()));
        for (auto e : t.shape()) io::write_le<std::uint32_t>(f, static_cast<std::uint32_t>(e));
        buf.resize(static_cast<std::size_t>(t.numel()));
        for (std::size_t j = 0; j < buf.size(); ++j) buf[j] = static_cast<float>(t.data()[j]);
        io::write_f32_block(f, buf.data(), buf.size());
    }
    if (!f) throw std::runtime_error("checkpoint: write failed on " + path);
}

template <typename T>
void load_checkpoint(ParameterStore<T>& params, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    io::expect_magic(f, kCheckpointMagic, "checkpoint");
    const auto version = io::read_le<std::uint32_t>(f);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto count = io::read_le<std::uint32_t>(f);
    if (count != params.size())
        throw std::runtime_error("checkpoint: has " + std::to_string(count) + " parameters, model expects " +
                                 std::to_string(params.size()));
    std::vector<float> buf;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = io::read_le<std::uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto rank = io::read_le<std::uint8_t>(f);
        Shape shape(rank);
        for (auto& e : shape) e = io::read_le<std::uint32_t>(f);
        if (!params.contains(name))
            throw std::runtime_error("checkpoint: parameter '" + name + "' not present in model");
        auto& t = params.at(name);
        if (t.shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch on '" + name + "': file " + shape_str(shape) +
                                     " vs model " + shape_str(t.shape()));
        buf.resize(static_cast<std::size_t>(shape_numel(shape)));
        io::read_f32_block(f, buf.data(), buf.size());
        auto& dst = t.mutable_data();
        for (std::size_t j = 0; j < buf.size(); ++j) dst[j] = static_cast<T>(buf[j]);
    }
}

} // namespace covnet
