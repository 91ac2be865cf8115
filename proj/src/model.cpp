#include "covnet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace covnet {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::covnet: return "covnet";
        case Variant::no_covariance_baseline: return "no_covariance_baseline";
        case Variant::modified_covnet: return "modified_covnet";
    }
    throw std::invalid_argument("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "covnet") return Variant::covnet;
    if (name == "no_covariance_baseline") return Variant::no_covariance_baseline;
    if (name == "modified_covnet") return Variant::modified_covnet;
    throw std::invalid_argument("unknown variant '" + name +
                                "' (expected covnet, no_covariance_baseline, or modified_covnet)");
}

namespace {
std::int64_t conv_out(std::int64_t n, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    return (n + 2 * pad - k) / stride + 1;
}
} // namespace

void ModelConfig::validate() const {
    if (n_a < 2 || n_t < 1) throw std::invalid_argument("model config: grid must be at least 2x1");
    if (n_heads < 1) throw std::invalid_argument("model config: n_heads must be >= 1");
    if (d_model() % n_heads != 0)
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model()) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    if (codeword_len < 1) throw std::invalid_argument("model config: codeword_len must be >= 1");
    if (n_encoder_blocks < 1 || n_decoder_blocks < 1)
        throw std::invalid_argument("model config: block counts must be >= 1");
    if (ffn_hidden_delay < 1 || ffn_hidden_angle < 1)
        throw std::invalid_argument("model config: FFN hidden widths must be >= 1");
    if (variant == Variant::covnet) {
        if (fire.empty()) throw std::invalid_argument("model config: covnet needs at least one fire module");
        for (const auto& f : fire)
            if (f.squeeze < 1 || f.expand1 < 1 || f.expand3 < 1)
                throw std::invalid_argument("model config: fire channels must be >= 1");
        if (stem_channels < 1) throw std::invalid_argument("model config: stem_channels must be >= 1");
        if (cipn_branch_a_len < 1) throw std::invalid_argument("model config: cipn_branch_a_len must be >= 1");
    }
    if (variant != Variant::no_covariance_baseline && n_t < 3)
        throw std::invalid_argument("model config: covariance CNN branch needs n_t >= 3");
}

// ---- FLOPs estimator ----

std::int64_t flops_linear(std::int64_t s, std::int64_t d_in, std::int64_t d_out) {
    return 2 * s * d_in * d_out;
}

std::int64_t flops_attention(std::int64_t s_q, std::int64_t s_kv, std::int64_t d) {
    const std::int64_t proj = flops_linear(s_q, d, d) + 2 * flops_linear(s_kv, d, d) + flops_linear(s_q, d, d);
    return proj + 2 * s_q * s_kv * d;
}

std::int64_t flops_conv(std::int64_t c_in, std::int64_t c_out, std::int64_t kh, std::int64_t kw,
                        std::int64_t h_out, std::int64_t w_out) {
    return 2 * c_in * c_out * kh * kw * h_out * w_out;
}

FlopsBreakdown estimate_flops(const ModelConfig& cfg) {
    cfg.validate();
    const std::int64_t s = 2 * cfg.n_a, d = cfg.d_model(), raw = cfg.raw_len(), m = cfg.codeword_len;

    const std::int64_t ffn_delay = flops_linear(s, cfg.n_t, cfg.ffn_hidden_delay) +
                                   flops_linear(s, cfg.ffn_hidden_delay, cfg.n_t);
    const std::int64_t ffn_angle = flops_linear(cfg.n_t, s, cfg.ffn_hidden_angle) +
                                   flops_linear(cfg.n_t, cfg.ffn_hidden_angle, s);
    const std::int64_t ffn = cfg.variant == Variant::modified_covnet ? ffn_delay : ffn_delay + ffn_angle;
    const std::int64_t enc_block = flops_attention(s, s, d) + ffn;

    FlopsBreakdown fb;
    fb.encoder = cfg.n_encoder_blocks * enc_block + flops_linear(1, raw, m);

    if (cfg.variant == Variant::covnet) {
        std::int64_t branch = cfg.n_encoder_blocks * enc_block + flops_linear(1, raw, cfg.cipn_branch_a_len);
        const std::int64_t h1 = conv_out(cfg.n_t, 3, 2, 1);
        branch += flops_conv(4, cfg.stem_channels, 3, 3, h1, h1);
        const std::int64_t h2 = conv_out(h1, 2, 2, 0);
        std::int64_t c_in = cfg.stem_channels;
        for (const auto& f : cfg.fire) {
            branch += flops_conv(c_in, f.squeeze, 1, 1, h2, h2);
            branch += flops_conv(f.squeeze, f.expand1, 1, 1, h2, h2);
            branch += flops_conv(f.squeeze, f.expand3, 3, 3, h2, h2);
            c_in = f.expand1 + f.expand3;
        }
        branch += flops_linear(1, cfg.cipn_branch_a_len + c_in, raw);
        fb.cipn = branch;
    } else if (cfg.variant == Variant::modified_covnet) {
        const std::int64_t h1 = conv_out(cfg.n_t, 3, 2, 1);
        const std::int64_t h2 = conv_out(h1, 3, 2, 1);
        std::int64_t branch = flops_conv(4, 8, 3, 3, h1, h1) + flops_conv(8, 4, 3, 3, h2, h2);
        branch += flops_linear(1, 4 * h2 * h2, raw);
        fb.cipn = branch;
    }

    const std::int64_t dec_block = flops_attention(s, s, d) + flops_attention(s, s, d) + ffn;
    fb.decoder = flops_linear(1, raw + m, raw) + cfg.n_decoder_blocks * dec_block + flops_linear(s, cfg.n_t, cfg.n_t);
    return fb;
}

// ---- parameter registration ----

template <typename T>
CovNetModel<T>::CovNetModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_params(init_seed);
}

template <typename T>
void CovNetModel<T>::add_linear(const std::string& name, std::int64_t d_in, std::int64_t d_out, bool bias, Rng& rng) {
    auto& w = params_.add(name + ".w", {d_in, d_out});
    init_glorot(w, d_in, d_out, rng);
    if (bias) params_.add(name + ".b", {d_out});  // zeros
}

template <typename T>
void CovNetModel<T>::add_layer_norm(const std::string& name, std::int64_t d) {
    auto& g = params_.add(name + ".g", {d});
    init_const(g, T(1));
    params_.add(name + ".b", {d});
}

template <typename T>
void CovNetModel<T>::add_conv(const std::string& name, std::int64_t c_in, std::int64_t c_out, std::int64_t kh,
                              std::int64_t kw, Rng& rng) {
    auto& w = params_.add(name + ".w", {c_out, c_in, kh, kw});
    init_glorot(w, c_in * kh * kw, c_out * kh * kw, rng);
    params_.add(name + ".b", {c_out});
}

template <typename T>
void CovNetModel<T>::add_attention(const std::string& prefix, Rng& rng) {
    const std::int64_t d = cfg_.d_model();
    // projection matrices only, per the attention definition; no biases
    add_linear(prefix + ".q", d, d, false, rng);
    add_linear(prefix + ".k", d, d, false, rng);
    add_linear(prefix + ".v", d, d, false, rng);
    add_linear(prefix + ".o", d, d, false, rng);
}

template <typename T>
void CovNetModel<T>::add_ffn(const std::string& prefix, Rng& rng) {
    if (cfg_.use_layer_norm) add_layer_norm(prefix + ".lnd", cfg_.n_t);
    add_linear(prefix + ".d1", cfg_.n_t, cfg_.ffn_hidden_delay, true, rng);
    add_linear(prefix + ".d2", cfg_.ffn_hidden_delay, cfg_.n_t, true, rng);
    if (cfg_.variant == Variant::modified_covnet) return;  // conventional FFN: delay axis only
    if (cfg_.use_layer_norm) add_layer_norm(prefix + ".lna", 2 * cfg_.n_a);
    add_linear(prefix + ".a1", 2 * cfg_.n_a, cfg_.ffn_hidden_angle, true, rng);
    add_linear(prefix + ".a2", cfg_.ffn_hidden_angle, 2 * cfg_.n_a, true, rng);
}

template <typename T>
void CovNetModel<T>::add_transformer_stack(const std::string& prefix, std::int64_t blocks, Rng& rng) {
    for (std::int64_t i = 0; i < blocks; ++i) {
        const std::string b = prefix + ".b" + std::to_string(i);
        if (cfg_.use_layer_norm) add_layer_norm(b + ".ln", cfg_.n_t);
        add_attention(b + ".attn", rng);
        add_ffn(b + ".ffn", rng);
    }
}

template <typename T>
void CovNetModel<T>::build_params(std::uint64_t init_seed) {
    Rng rng = Rng::stream(init_seed, 0xC0DEu);
    const std::int64_t raw = cfg_.raw_len();

    add_transformer_stack("enc", cfg_.n_encoder_blocks, rng);
    add_linear("enc.out", raw, cfg_.codeword_len, true, rng);

    if (cfg_.variant == Variant::covnet) {
        add_transformer_stack("cipn.a", cfg_.n_encoder_blocks, rng);
        add_linear("cipn.a.out", raw, cfg_.cipn_branch_a_len, true, rng);
        add_conv("cipn.b.stem", 4, cfg_.stem_channels, 3, 3, rng);
        std::int64_t c_in = cfg_.stem_channels;
        for (std::size_t i = 0; i < cfg_.fire.size(); ++i) {
            const std::string f = "cipn.b.f" + std::to_string(i);
            add_conv(f + ".squeeze", c_in, cfg_.fire[i].squeeze, 1, 1, rng);
            add_conv(f + ".expand1", cfg_.fire[i].squeeze, cfg_.fire[i].expand1, 1, 1, rng);
            add_conv(f + ".expand3", cfg_.fire[i].squeeze, cfg_.fire[i].expand3, 3, 3, rng);
            c_in = cfg_.fire[i].expand1 + cfg_.fire[i].expand3;
        }
        add_linear("cipn.out", cfg_.cipn_branch_a_len + c_in, raw, true, rng);
    } else if (cfg_.variant == Variant::modified_covnet) {
        add_conv("cipn.b.conv1", 4, 8, 3, 3, rng);
        add_conv("cipn.b.conv2", 8, 4, 3, 3, rng);
        const std::int64_t h2 = conv_out(conv_out(cfg_.n_t, 3, 2, 1), 3, 2, 1);
        add_linear("cipn.out", 4 * h2 * h2, raw, true, rng);
    }

    add_linear("dec.in", raw + cfg_.codeword_len, raw, true, rng);
    for (std::int64_t i = 0; i < cfg_.n_decoder_blocks; ++i) {
        const std::string b = "dec.b" + std::to_string(i);
        if (cfg_.use_layer_norm) {
            add_layer_norm(b + ".ln_self", cfg_.n_t);
            add_layer_norm(b + ".ln_q", cfg_.n_t);
            add_layer_norm(b + ".ln_kv", cfg_.n_t);
        }
        add_attention(b + ".self", rng);
        add_attention(b + ".cross", rng);
        add_ffn(b + ".ffn", rng);
    }
    add_linear("dec.out", cfg_.n_t, cfg_.n_t, true, rng);
}

// ---- forward pieces ----

template <typename T>
Tensor<T> CovNetModel<T>::apply_linear(const std::string& name, const Tensor<T>& x, bool bias) {
    const auto& w = params_.at(name + ".w");
    if (bias) return ops::linear(x, w, params_.at(name + ".b"));
    Shape out_shape = x.shape();
    out_shape.back() = w.dim(1);
    auto flat = ops::reshape(x, {x.numel() / x.shape().back(), x.shape().back()});
    return ops::reshape(ops::matmul(flat, w), std::move(out_shape));
}

template <typename T>
Tensor<T> CovNetModel<T>::maybe_norm(const std::string& name, const Tensor<T>& x) {
    if (!cfg_.use_layer_norm) return x;
    return ops::layer_norm(x, params_.at(name + ".g"), params_.at(name + ".b"));
}

template <typename T>
Tensor<T> CovNetModel<T>::attention(const std::string& prefix, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                                    bool causal) {
    const std::int64_t heads = cfg_.n_heads;
    const std::int64_t dh = cfg_.d_model() / heads;
    auto q = ops::split_heads(apply_linear(prefix + ".q", q_in, false), heads);
    auto k = ops::split_heads(apply_linear(prefix + ".k", kv_in, false), heads);
    auto v = ops::split_heads(apply_linear(prefix + ".v", kv_in, false), heads);
    auto scores = ops::scale(ops::bmm_nt(q, k), T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh))));
    auto probs = ops::softmax_rows(scores, causal);
    auto ctx = ops::merge_heads(ops::bmm(probs, v), heads);
    return apply_linear(prefix + ".o", ctx, false);
}

template <typename T>
Tensor<T> CovNetModel<T>::tailored_ffn(const std::string& prefix, const Tensor<T>& x) {
    // delay axis: shared MLP across the 2N_a rows
    auto t = maybe_norm(prefix + ".lnd", x);
    t = apply_linear(prefix + ".d1", t);
    t = ops::relu(t);
    t = apply_linear(prefix + ".d2", t);
    auto y = ops::add(x, t);
    if (cfg_.variant == Variant::modified_covnet) return y;  // conventional FFN stops here
    // angle axis: transpose so rows become length-2N_a angle vectors
    auto z = ops::transpose_last2(y);
    auto u = maybe_norm(prefix + ".lna", z);
    u = apply_linear(prefix + ".a1", u);
    u = ops::relu(u);
    u = apply_linear(prefix + ".a2", u);
    z = ops::add(z, u);
    return ops::transpose_last2(z);
}

template <typename T>
Tensor<T> CovNetModel<T>::transformer_stack(const std::string& prefix, Tensor<T> x) {
    for (std::int64_t i = 0; i < cfg_.n_encoder_blocks; ++i) {
        const std::string b = prefix + ".b" + std::to_string(i);
        auto a_in = maybe_norm(b + ".ln", x);
        x = ops::add(x, attention(b + ".attn", a_in, a_in, false));
        x = tailored_ffn(b + ".ffn", x);
    }
    return x;
}

template <typename T>
Tensor<T> CovNetModel<T>::encode(const Tensor<T>& h) {
    if (h.rank() != 3 || h.dim(1) != 2 * cfg_.n_a || h.dim(2) != cfg_.n_t)
        throw std::invalid_argument("encode: expected [B," + std::to_string(2 * cfg_.n_a) + "," +
                                    std::to_string(cfg_.n_t) + "], got " + shape_str(h.shape()));
    auto x = transformer_stack("enc", h);
    auto flat = ops::reshape(x, {h.dim(0), cfg_.raw_len()});
    return apply_linear("enc.out", flat);
}

template <typename T>
Tensor<T> CovNetModel<T>::fire_module(const std::string& prefix, const Tensor<T>& x) {
    auto s = ops::relu(ops::conv2d(x, params_.at(prefix + ".squeeze.w"), params_.at(prefix + ".squeeze.b"), 1, 0));
    auto e1 = ops::conv2d(s, params_.at(prefix + ".expand1.w"), params_.at(prefix + ".expand1.b"), 1, 0);
    auto e3 = ops::conv2d(s, params_.at(prefix + ".expand3.w"), params_.at(prefix + ".expand3.b"), 1, 1);
    return ops::relu(ops::concat_channels(e1, e3));
}

template <typename T>
Tensor<T> CovNetModel<T>::cipn_branch_b(const Tensor<T>& c_bar) {
    auto x = ops::relu(ops::conv2d(c_bar, params_.at("cipn.b.stem.w"), params_.at("cipn.b.stem.b"), 2, 1));
    x = ops::maxpool2d(x, 2, 2);
    for (std::size_t i = 0; i < cfg_.fire.size(); ++i) x = fire_module("cipn.b.f" + std::to_string(i), x);
    return ops::global_avg_pool(x);
}

template <typename T>
Tensor<T> CovNetModel<T>::cipn(const Tensor<T>& q_bar, const Tensor<T>& c_bar) {
    if (cfg_.variant == Variant::no_covariance_baseline)
        throw std::logic_error("cipn: the no-covariance baseline has no CIPN");
    if (c_bar.rank() != 4 || c_bar.dim(1) != 4 || c_bar.dim(2) != cfg_.n_t || c_bar.dim(3) != cfg_.n_t)
        throw std::invalid_argument("cipn: expected c_bar [B,4," + std::to_string(cfg_.n_t) + "," +
                                    std::to_string(cfg_.n_t) + "], got " + shape_str(c_bar.shape()));
    if (cfg_.variant == Variant::modified_covnet) {
        auto x = ops::relu(ops::conv2d(c_bar, params_.at("cipn.b.conv1.w"), params_.at("cipn.b.conv1.b"), 2, 1));
        x = ops::relu(ops::conv2d(x, params_.at("cipn.b.conv2.w"), params_.at("cipn.b.conv2.b"), 2, 1));
        auto flat = ops::reshape(x, {x.dim(0), x.numel() / x.dim(0)});
        return apply_linear("cipn.out", flat);
    }
    if (q_bar.rank() != 3 || q_bar.dim(1) != 2 * cfg_.n_a || q_bar.dim(2) != cfg_.n_t)
        throw std::invalid_argument("cipn: expected q_bar [B," + std::to_string(2 * cfg_.n_a) + "," +
                                    std::to_string(cfg_.n_t) + "], got " + shape_str(q_bar.shape()));
    auto a = transformer_stack("cipn.a", q_bar);
    auto v_a = apply_linear("cipn.a.out", ops::reshape(a, {q_bar.dim(0), cfg_.raw_len()}));
    auto v_b = cipn_branch_b(c_bar);
    return apply_linear("cipn.out", ops::concat_last(v_a, v_b));
}

template <typename T>
Tensor<T> CovNetModel<T>::decode(const Tensor<T>& v, const Tensor<T>& v_c) {
    if (v.rank() != 2 || v.dim(1) != cfg_.codeword_len)
        throw std::invalid_argument("decode: expected codeword [B," + std::to_string(cfg_.codeword_len) + "], got " +
                                    shape_str(v.shape()));
    if (v_c.rank() != 2 || v_c.dim(1) != cfg_.raw_len() || v_c.dim(0) != v.dim(0))
        throw std::invalid_argument("decode: expected v_c [B," + std::to_string(cfg_.raw_len()) + "], got " +
                                    shape_str(v_c.shape()));
    auto y0 = apply_linear("dec.in", ops::concat_last(v_c, v));
    auto y = ops::reshape(y0, {v.dim(0), 2 * cfg_.n_a, cfg_.n_t});
    auto x = y;
    for (std::int64_t i = 0; i < cfg_.n_decoder_blocks; ++i) {
        const std::string b = "dec.b" + std::to_string(i);
        auto self_in = maybe_norm(b + ".ln_self", x);
        x = ops::add(x, attention(b + ".self", self_in, self_in, cfg_.causal_decoder_mask));
        auto q_in = maybe_norm(b + ".ln_q", x);
        auto kv_in = maybe_norm(b + ".ln_kv", y);
        x = ops::add(x, attention(b + ".cross", q_in, kv_in, false));
        x = tailored_ffn(b + ".ffn", x);
    }
    return apply_linear("dec.out", x);
}

template <typename T>
Tensor<T> CovNetModel<T>::forward(const Tensor<T>& h, const Tensor<T>& q_bar, const Tensor<T>& c_bar) {
    auto v = encode(h);
    Tensor<T> v_c;
    if (cfg_.variant == Variant::no_covariance_baseline)
        v_c = Tensor<T>::zeros({h.dim(0), cfg_.raw_len()});
    else
        v_c = cipn(q_bar, c_bar);
    return decode(v, v_c);
}

template class CovNetModel<float>;
template class CovNetModel<double>;

} // namespace covnet
