#pragma once

#include <memory>
#include <string>
#include <vector>

#include "comg/attention.hpp"
#include "comg/params.hpp"

namespace comg {

struct GenerationConfig {
  int beam_width = 3;
  int max_len = 48;  // max generated body tokens
  double length_penalty = 1.0;
};

struct GeneratorParams {
  LayerNormParams fuse_ln;
  AttentionParams fuse_attn;
  std::vector<EncoderLayerParams> mem_layers;
  LayerNormParams mem_final_ln;
  Tensor tok_embedding;  // [vocab, dim]
  std::vector<DecoderLayerParams> layers;
  LayerNormParams final_ln;
  Tensor head_w, head_b;
  int dim = 0, heads = 0, max_len = 0, vocab = 0;
};

GeneratorParams make_generator(ParamRegistry& reg, int vocab_size, int dim, int heads, int decoder_layers,
                               int memory_layers, int ffn_hidden, int max_len, Rng& rng);

// cross-attention fusion: query = f_high tokens, key/value = fusion memory
Tensor fuse(const Tensor& f_high, const Tensor& fusion_memory, const GeneratorParams& p);
// fuse + memory encoder stack + final norm -> decoder memory
Tensor encode_fused_memory(const Tensor& f_high, const Tensor& fusion_memory, const GeneratorParams& p);

// teacher-forced logits; prefix[0] must be the begin token; row t depends on
// prefix[0..t] only. Throws when the prefix exceeds max_len + 1 positions.
Tensor decode_logits(const std::vector<int>& prefix, const Tensor& memory, const GeneratorParams& p);

// Incremental no-grad decoder over cached keys/values. Arithmetic matches
// decode_logits row-for-row (same kernels, same summation order). Copyable,
// so beam hypotheses fork cheaply; the memory projections are shared.
class DecoderStream {
 public:
  DecoderStream(const GeneratorParams& p, const Tensor& memory);
  // feeds one token, returns logits over the vocabulary for the next position
  const std::vector<double>& step(int token);
  int position() const { return pos_; }

 private:
  struct MemoryCache;
  const GeneratorParams* p_;
  std::shared_ptr<const MemoryCache> mem_;
  std::vector<std::vector<double>> self_k_, self_v_;  // per layer, pos_*dim flat
  std::vector<double> logits_;
  int pos_ = 0;
};

struct DecodeResult {
  std::vector<int> body;   // generated tokens, no begin/end markers
  bool ended = false;      // stopped on the end token (vs the length cut)
  double log_prob = 0.0;   // sum of step log-probabilities, end step included
  double score = 0.0;      // log_prob / len^length_penalty
};

DecodeResult greedy_decode_full(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg);
std::vector<int> greedy_decode(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg);

// per-step kept-beam scores, best first; used to audit beam behaviour
struct BeamTrace {
  std::vector<std::vector<double>> step_scores;
};

// Length-normalized beam search (score = logP / len^length_penalty) with a
// completed-hypothesis pool. The greedy rollout is kept as a score floor, so
// widening the beam never returns a worse-scoring hypothesis.
DecodeResult beam_search_full(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                              BeamTrace* trace = nullptr);
std::vector<int> beam_search(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                             BeamTrace* trace = nullptr);

// multinomial sampling from the step distributions (RL exploration)
DecodeResult sample_decode(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                           Rng& rng);

}  // namespace comg
