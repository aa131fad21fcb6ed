#include "comg/dimf.hpp"

#include <cmath>

#include "comg/ops.hpp"

namespace comg {

DimfParams make_dimf(ParamRegistry& reg, int dim, int heads, Rng& rng) {
  DimfParams p;
  p.sa_ln = make_layer_norm(reg, "dimf.sa.ln", dim, rng);
  p.sa_attn = make_attention(reg, "dimf.sa.attn", dim, heads, rng);
  p.ca_ln = make_layer_norm(reg, "dimf.ca.ln", dim, rng);
  p.ca_attn = make_attention(reg, "dimf.ca.attn", dim, heads, rng);
  p.reweight = reg.create("dimf.reweight", {kNumOrgans}, Init::Zeros, rng);
  p.compress_w = reg.create("dimf.compress.weight", {dim, dim}, Init::XavierUniform, rng);
  p.compress_b = reg.create("dimf.compress.bias", {dim}, Init::Zeros, rng);
  return p;
}

std::array<std::vector<int>, kNumOrgans> caption_token_ids(const DiseaseGraph& graph, const Vocabulary& vocab) {
  std::array<std::vector<int>, kNumOrgans> ids;
  for (Organ og : kOrgans) {
    std::string text;
    for (const auto& e : graph.diseases(og)) {
      if (!text.empty()) text += ' ';
      text += e.prior_caption;
    }
    ids[static_cast<size_t>(og)] = vocab.encode(text, /*add_markers=*/true);
  }
  return ids;
}

DiseaseEmbeddings encode_disease_captions(const std::array<std::vector<int>, kNumOrgans>& caption_ids,
                                          const TextEncoderParams& text) {
  DiseaseEmbeddings out;
  for (Organ og : kOrgans)
    out.l[static_cast<size_t>(og)] = encode_text(caption_ids[static_cast<size_t>(og)], text);
  return out;
}

Tensor dimf_self_stage(const Tensor& p_og, const DimfParams& p, std::vector<Tensor>* attn_out) {
  return self_attention_block(p_og, p.sa_ln, p.sa_attn, /*causal=*/false, attn_out);
}

Tensor dimf_cross_stage(const Tensor& sa_out, const Tensor& l_og, const DimfParams& p,
                        std::vector<Tensor>* attn_out) {
  return cross_attention_block(sa_out, l_og, p.ca_ln, p.ca_attn, attn_out);
}

Tensor dimf_forward(const Tensor& p_og, const Tensor& l_og, const DimfParams& p) {
  return dimf_cross_stage(dimf_self_stage(p_og, p), l_og, p);
}

std::array<double, kNumOrgans> normalized_reweight(const Tensor& reweight) {
  NoGradGuard ng;
  Tensor w = softmax(reshape(reweight, {1, kNumOrgans}), 1);
  std::array<double, kNumOrgans> out{};
  for (int i = 0; i < kNumOrgans; ++i) out[static_cast<size_t>(i)] = w.data()[static_cast<size_t>(i)];
  return out;
}

Tensor fuse_global(const std::array<Tensor, kNumOrgans>& toks, const Tensor& reweight) {
  for (int i = 1; i < kNumOrgans; ++i)
    if (toks[static_cast<size_t>(i)].shape() != toks[0].shape())
      op_shape_error("fuse_global", toks[0].shape(), toks[static_cast<size_t>(i)].shape());
  Tensor w = softmax(reshape(reweight, {1, kNumOrgans}), 1);
  Tensor glb;
  for (int i = 0; i < kNumOrgans; ++i) {
    Tensor wi = reshape(slice_cols(w, i, 1), {1});
    Tensor scaled = scale_by(toks[static_cast<size_t>(i)], wi);
    glb = glb.defined() ? add(glb, scaled) : scaled;
  }
  return glb;
}

Tensor compress_concat(const Tensor& tok_glb, const OrganPrototypes& protos, const DimfParams& p) {
  std::vector<Tensor> parts = {tok_glb};
  for (Organ og : kOrgans) parts.push_back(protos.p[static_cast<size_t>(og)]);
  return linear(concat_rows(parts), p.compress_w, p.compress_b);
}

}  // namespace comg
