#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covnet/ops.hpp"
#include "covnet/optimizer.hpp"
#include "covnet/rng.hpp"

// The CovNet autoencoder.
//
//   encoder: blocks of (multihead self-attention + tailored FFN) over the
//            stacked-real channel [2N_a, N_t], flattened to codeword v[M]
//   CIPN:    branch A = the same Transformer stack over stacked Q̄ -> v_a;
//            branch B = conv stem + fire modules over the 4-channel C̄ -> v_b;
//            concat -> linear -> v_c of length 2·N_a·N_t
//   decoder: Y = reshape(linear(concat(v_c, v))); blocks of masked
//            self-attention, cross-attention against Y, tailored FFN;
//            per-row linear to N_t
//
// Variants:
//   covnet                  — everything above
//   no_covariance_baseline  — v_c is a constant zero vector; no CIPN params
//   modified_covnet         — delay-axis-only ("conventional") FFN; CIPN
//                             replaced by a plain two-layer CNN on C̄ only
//
// All forward paths take a leading batch axis: H and Q̄ as [B, 2N_a, N_t],
// C̄ as [B, 4, N_t, N_t].

namespace covnet {

enum class Variant { covnet, no_covariance_baseline, modified_covnet };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct FireConfig {
    std::int64_t squeeze = 4, expand1 = 8, expand3 = 8;
};

struct ModelConfig {
    std::int64_t n_a = 32, n_t = 32;   // d_model = n_t: rows are delay-domain vectors
    std::int64_t n_heads = 2;
    std::int64_t codeword_len = 64;    // M
    std::int64_t n_encoder_blocks = 2; // CIPN branch A mirrors this depth
    std::int64_t n_decoder_blocks = 2;
    std::int64_t ffn_hidden_delay = 64;
    std::int64_t ffn_hidden_angle = 128;
    std::int64_t cipn_branch_a_len = 64;   // |v_a|; fixed so covariance capacity is CR-independent
    std::int64_t stem_channels = 8;
    std::vector<FireConfig> fire = {{4, 8, 8}, {4, 8, 8}};
    Variant variant = Variant::covnet;
    bool use_layer_norm = true;        // pre-norm before every sublayer
    bool causal_decoder_mask = true;   // ablation switch for the masked layer

    std::int64_t d_model() const { return n_t; }
    std::int64_t raw_len() const { return 2 * n_a * n_t; }
    void validate() const;
};

// Analytic multiply-add counts (multiply-adds counted as 2 flops):
//   linear    2·s·d_in·d_out
//   attention the four projections (as linears) + 2·s_q·s_kv·d covering the
//             logit products and the weighted sum
//   conv      2·c_in·c_out·kh·kw·h_out·w_out
// Normalization, softmax, residuals, and pooling are not counted.
struct FlopsBreakdown {
    std::int64_t encoder = 0, cipn = 0, decoder = 0;
    std::int64_t total() const { return encoder + cipn + decoder; }
};

std::int64_t flops_linear(std::int64_t s, std::int64_t d_in, std::int64_t d_out);
std::int64_t flops_attention(std::int64_t s_q, std::int64_t s_kv, std::int64_t d);
std::int64_t flops_conv(std::int64_t c_in, std::int64_t c_out, std::int64_t kh, std::int64_t kw,
                        std::int64_t h_out, std::int64_t w_out);
FlopsBreakdown estimate_flops(const ModelConfig& cfg);

template <typename T>
class CovNetModel {
public:
    CovNetModel(ModelConfig cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return params_; }
    const ParameterStore<T>& params() const { return params_; }

    // h: [B, 2N_a, N_t] -> [B, M]
    Tensor<T> encode(const Tensor<T>& h);
    // q_bar: [B, 2N_a, N_t], c_bar: [B, 4, N_t, N_t] -> [B, 2·N_a·N_t]
    Tensor<T> cipn(const Tensor<T>& q_bar, const Tensor<T>& c_bar);
    // v: [B, M], v_c: [B, 2·N_a·N_t] -> [B, 2N_a, N_t]
    Tensor<T> decode(const Tensor<T>& v, const Tensor<T>& v_c);
    // full pipeline; q_bar/c_bar ignored where the variant has no use for them
    Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& q_bar, const Tensor<T>& c_bar);

private:
    ModelConfig cfg_;
    ParameterStore<T> params_;

    void build_params(std::uint64_t init_seed);
    void add_linear(const std::string& name, std::int64_t d_in, std::int64_t d_out, bool bias, Rng& rng);
    void add_layer_norm(const std::string& name, std::int64_t d);
    void add_conv(const std::string& name, std::int64_t c_in, std::int64_t c_out, std::int64_t kh, std::int64_t kw,
                  Rng& rng);
    void add_attention(const std::string& prefix, Rng& rng);
    void add_ffn(const std::string& prefix, Rng& rng);
    void add_transformer_stack(const std::string& prefix, std::int64_t blocks, Rng& rng);

    Tensor<T> apply_linear(const std::string& name, const Tensor<T>& x, bool bias = true);
    Tensor<T> maybe_norm(const std::string& name, const Tensor<T>& x);
    Tensor<T> attention(const std::string& prefix, const Tensor<T>& q_in, const Tensor<T>& kv_in, bool causal);
    Tensor<T> tailored_ffn(const std::string& prefix, const Tensor<T>& x);
    Tensor<T> transformer_stack(const std::string& prefix, Tensor<T> x);
    Tensor<T> fire_module(const std::string& prefix, const Tensor<T>& x);
    Tensor<T> cipn_branch_b(const Tensor<T>& c_bar);
};

} // namespace covnet
