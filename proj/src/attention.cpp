#include "comg/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace comg {

AttentionParams make_attention(ParamRegistry& reg, const std::string& prefix, int dim, int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("attention: dim " + std::to_string(dim) + " not divisible by heads " +
                                std::to_string(heads));
  AttentionParams p;
  p.heads = heads;
  p.wq = reg.create(prefix + ".wq", {dim, dim}, Init::XavierUniform, rng);
  p.bq = reg.create(prefix + ".bq", {dim}, Init::Zeros, rng);
  p.wk = reg.create(prefix + ".wk", {dim, dim}, Init::XavierUniform, rng);
  p.bk = reg.create(prefix + ".bk", {dim}, Init::Zeros, rng);
  p.wv = reg.create(prefix + ".wv", {dim, dim}, Init::XavierUniform, rng);
  p.bv = reg.create(prefix + ".bv", {dim}, Init::Zeros, rng);
  p.wo = reg.create(prefix + ".wo", {dim, dim}, Init::XavierUniform, rng);
  p.bo = reg.create(prefix + ".bo", {dim}, Init::Zeros, rng);
  return p;
}

namespace {
// additive causal mask applied to score rows; -1e30 keeps softmax finite
Tensor apply_causal_mask(const Tensor& scores) {
  const int n = scores.dim(0), m = scores.dim(1);
  std::vector<double> mask(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < m; ++j) mask[static_cast<size_t>(i) * m + j] = -1e30;
  return add(scores, Tensor::from({n, m}, std::move(mask)));
}
}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& p, bool causal, std::vector<Tensor>* attn_out) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("attention: rank-2 inputs required");
  if (k.dim(0) != v.dim(0)) op_shape_error("attention key/value", k.shape(), v.shape());
  const int dim = p.wq.dim(0);
  if (q.dim(1) != dim || k.dim(1) != dim || v.dim(1) != dim)
    op_shape_error("attention input", q.shape(), p.wq.shape());
  if (causal && q.dim(0) != k.dim(0))
    throw std::invalid_argument("attention: causal mask needs equal query/key lengths");

  const int heads = p.heads;
  const int dh = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor qp = linear(q, p.wq, p.bq);
  Tensor kp = linear(k, p.wk, p.bk);
  Tensor vp = linear(v, p.wv, p.bv);

  if (attn_out) attn_out->clear();
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * dh, dh);
    Tensor kh = slice_cols(kp, h * dh, dh);
    Tensor vh = slice_cols(vp, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    if (causal) scores = apply_causal_mask(scores);
    Tensor weights = softmax(scores, 1);
    if (attn_out) attn_out->push_back(weights);
    head_outs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear(merged, p.wo, p.bo);
}

LayerNormParams make_layer_norm(ParamRegistry& reg, const std::string& prefix, int dim, Rng& rng) {
  LayerNormParams p;
  p.gamma = reg.create(prefix + ".gamma", {dim}, Init::Ones, rng);
  p.beta = reg.create(prefix + ".beta", {dim}, Init::Zeros, rng);
  return p;
}

FeedForwardParams make_feed_forward(ParamRegistry& reg, const std::string& prefix, int dim, int hidden, Rng& rng) {
  FeedForwardParams p;
  p.w1 = reg.create(prefix + ".w1", {dim, hidden}, Init::XavierUniform, rng);
  p.b1 = reg.create(prefix + ".b1", {hidden}, Init::Zeros, rng);
  p.w2 = reg.create(prefix + ".w2", {hidden, dim}, Init::XavierUniform, rng);
  p.b2 = reg.create(prefix + ".b2", {dim}, Init::Zeros, rng);
  return p;
}

Tensor self_attention_block(const Tensor& x, const LayerNormParams& ln, const AttentionParams& attn,
                            bool causal, std::vector<Tensor>* attn_out) {
  Tensor h = apply_ln(x, ln);
  return add(x, multi_head_attention(h, h, h, attn, causal, attn_out));
}

Tensor cross_attention_block(const Tensor& x, const Tensor& memory, const LayerNormParams& ln,
                             const AttentionParams& attn, std::vector<Tensor>* attn_out) {
  Tensor h = apply_ln(x, ln);
  return add(x, multi_head_attention(h, memory, memory, attn, false, attn_out));
}

Tensor feed_forward_block(const Tensor& x, const LayerNormParams& ln, const FeedForwardParams& ffn) {
  Tensor h = apply_ln(x, ln);
  h = relu(linear(h, ffn.w1, ffn.b1));
  return add(x, linear(h, ffn.w2, ffn.b2));
}

EncoderLayerParams make_encoder_layer(ParamRegistry& reg, const std::string& prefix, int dim, int heads,
                                      int ffn_hidden, Rng& rng) {
  EncoderLayerParams p;
  p.ln1 = make_layer_norm(reg, prefix + ".ln1", dim, rng);
  p.attn = make_attention(reg, prefix + ".attn", dim, heads, rng);
  p.ln2 = make_layer_norm(reg, prefix + ".ln2", dim, rng);
  p.ffn = make_feed_forward(reg, prefix + ".ffn", dim, ffn_hidden, rng);
  return p;
}

Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p) {
  Tensor h = self_attention_block(x, p.ln1, p.attn);
  return feed_forward_block(h, p.ln2, p.ffn);
}

DecoderLayerParams make_decoder_layer(ParamRegistry& reg, const std::string& prefix, int dim, int heads,
                                      int ffn_hidden, Rng& rng) {
  DecoderLayerParams p;
  p.ln1 = make_layer_norm(reg, prefix + ".ln1", dim, rng);
  p.self_attn = make_attention(reg, prefix + ".self", dim, heads, rng);
  p.ln2 = make_layer_norm(reg, prefix + ".ln2", dim, rng);
  p.cross_attn = make_attention(reg, prefix + ".cross", dim, heads, rng);
  p.ln3 = make_layer_norm(reg, prefix + ".ln3", dim, rng);
  p.ffn = make_feed_forward(reg, prefix + ".ffn", dim, ffn_hidden, rng);
  return p;
}

Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerParams& p) {
  Tensor h = self_attention_block(x, p.ln1, p.self_attn, /*causal=*/true);
  h = cross_attention_block(h, memory, p.ln2, p.cross_attn);
  return feed_forward_block(h, p.ln3, p.ffn);
}

}  // namespace comg
