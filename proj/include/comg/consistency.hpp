#pragma once

#include "comg/ops.hpp"
#include "comg/params.hpp"

namespace comg {

// 1 - cosine similarity, in [0,2]; degenerate norms give loss 1, zero grad
inline Tensor sim_loss(const Tensor& a, const Tensor& b) { return cosine_loss(a, b); }

struct Projector {
  Tensor w, b;
};
Projector make_projector(ParamRegistry& reg, const std::string& prefix, int dim, Rng& rng);

// mean over the token axis followed by the learned projection -> [dim]
Tensor pool_and_project(const Tensor& tokens, const Projector& p);

// the four pooled embeddings entering the two consistency losses
struct ConsistencyParams {
  Projector caption;        // ground-truth report embedding (l_IC)
  Projector prototype;      // pooled organ prototypes
  Projector keywords;       // extracted-keyword embedding (l_EC)
  Projector correlation;    // pooled correlation tokens
};
ConsistencyParams make_consistency(ParamRegistry& reg, int dim, Rng& rng);

struct ConsistencyLosses {
  Tensor sim_im;  // caption <-> prototypes
  Tensor sim_dt;  // keywords <-> correlation tokens
};

ConsistencyLosses consistency_losses(const Tensor& caption_tokens, const Tensor& prototype_tokens,
                                     const Tensor& keyword_tokens, const Tensor& correlation_tokens,
                                     const ConsistencyParams& p);

}  // namespace comg
