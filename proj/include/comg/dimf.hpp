#pragma once

#include <array>
#include <vector>

#include "comg/attention.hpp"
#include "comg/backbone.hpp"
#include "comg/corpus.hpp"
#include "comg/text_encoder.hpp"

namespace comg {

// Disease image-mask fusion: per-organ correlation tokens from prototype
// self-attention crossed with prior disease-caption embeddings, a learnable
// reweight over organs, and the compression of the concatenated memory.
struct DimfParams {
  LayerNormParams sa_ln;
  AttentionParams sa_attn;
  LayerNormParams ca_ln;
  AttentionParams ca_attn;
  Tensor reweight;              // [4] learnable organ weights
  Tensor compress_w, compress_b;  // dim -> dim
};

DimfParams make_dimf(ParamRegistry& reg, int dim, int heads, Rng& rng);

struct DiseaseEmbeddings {
  std::array<Tensor, kNumOrgans> l;  // each [L_og, dim]
};

// caption token ids per organ: the organ's prior captions concatenated,
// tokenized once against the run vocabulary (unknown words become <unk>)
std::array<std::vector<int>, kNumOrgans> caption_token_ids(const DiseaseGraph& graph, const Vocabulary& vocab);

DiseaseEmbeddings encode_disease_captions(const std::array<std::vector<int>, kNumOrgans>& caption_ids,
                                          const TextEncoderParams& text);

// self-attention stage over the prototype tokens
Tensor dimf_self_stage(const Tensor& p_og, const DimfParams& p, std::vector<Tensor>* attn_out = nullptr);
// cross-attention stage: query = self stage output, key/value = l_og
Tensor dimf_cross_stage(const Tensor& sa_out, const Tensor& l_og, const DimfParams& p,
                        std::vector<Tensor>* attn_out = nullptr);
Tensor dimf_forward(const Tensor& p_og, const Tensor& l_og, const DimfParams& p);

struct CorrelationTokens {
  std::array<Tensor, kNumOrgans> tok;  // each [N_p, dim]
  Tensor tok_glb;                      // [N_p, dim]
};

// softmax-normalized reweight combination of the four token sequences
Tensor fuse_global(const std::array<Tensor, kNumOrgans>& toks, const Tensor& reweight);
std::array<double, kNumOrgans> normalized_reweight(const Tensor& reweight);

// [tok_glb; P_bone; P_lung; P_heart; P_mediastinum] along the token axis,
// then the learned dim -> dim compression
Tensor compress_concat(const Tensor& tok_glb, const OrganPrototypes& protos, const DimfParams& p);

}  // namespace comg
