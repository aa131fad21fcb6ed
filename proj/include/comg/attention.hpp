#pragma once

#include <optional>
#include <string>
#include <vector>

#include "comg/ops.hpp"
#include "comg/params.hpp"

namespace comg {

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  int heads = 1;
};

AttentionParams make_attention(ParamRegistry& reg, const std::string& prefix, int dim, int heads, Rng& rng);

// Scaled dot-product attention with `heads` heads; q [Nq,D], k/v [Nk,D].
// With causal=true position i attends keys 0..i (requires Nq == Nk).
// attn_out, when given, receives one [Nq,Nk] weight matrix per head.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& p, bool causal = false,
                            std::vector<Tensor>* attn_out = nullptr);

struct LayerNormParams {
  Tensor gamma, beta;
};
LayerNormParams make_layer_norm(ParamRegistry& reg, const std::string& prefix, int dim, Rng& rng);
inline Tensor apply_ln(const Tensor& x, const LayerNormParams& p) { return layer_norm(x, p.gamma, p.beta); }

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};
FeedForwardParams make_feed_forward(ParamRegistry& reg, const std::string& prefix, int dim, int hidden, Rng& rng);

// pre-layer-norm residual blocks
Tensor self_attention_block(const Tensor& x, const LayerNormParams& ln, const AttentionParams& attn,
                            bool causal = false, std::vector<Tensor>* attn_out = nullptr);
Tensor cross_attention_block(const Tensor& x, const Tensor& memory, const LayerNormParams& ln,
                             const AttentionParams& attn, std::vector<Tensor>* attn_out = nullptr);
Tensor feed_forward_block(const Tensor& x, const LayerNormParams& ln, const FeedForwardParams& ffn);

struct EncoderLayerParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  FeedForwardParams ffn;
};
EncoderLayerParams make_encoder_layer(ParamRegistry& reg, const std::string& prefix, int dim, int heads,
                                      int ffn_hidden, Rng& rng);
Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p);

struct DecoderLayerParams {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self_attn, cross_attn;
  FeedForwardParams ffn;
};
DecoderLayerParams make_decoder_layer(ParamRegistry& reg, const std::string& prefix, int dim, int heads,
                                      int ffn_hidden, Rng& rng);
Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerParams& p);

}  // namespace comg
