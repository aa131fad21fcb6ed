#include "comg/consistency.hpp"

#include <stdexcept>

namespace comg {

Projector make_projector(ParamRegistry& reg, const std::string& prefix, int dim, Rng& rng) {
  Projector p;
  p.w = reg.create(prefix + ".weight", {dim, dim}, Init::XavierUniform, rng);
  p.b = reg.create(prefix + ".bias", {dim}, Init::Zeros, rng);
  return p;
}

Tensor pool_and_project(const Tensor& tokens, const Projector& p) {
  if (tokens.rank() != 2 || tokens.dim(0) < 1)
    throw std::invalid_argument("pool_and_project: need a non-empty token sequence, got " +
                                shape_str(tokens.shape()));
  Tensor pooled = mean_pool(tokens, 0);
  return reshape(linear(reshape(pooled, {1, tokens.dim(1)}), p.w, p.b), {p.b.dim(0)});
}

ConsistencyParams make_consistency(ParamRegistry& reg, int dim, Rng& rng) {
  ConsistencyParams p;
  p.caption = make_projector(reg, "consistency.caption_proj", dim, rng);
  p.prototype = make_projector(reg, "consistency.prototype_proj", dim, rng);
  p.keywords = make_projector(reg, "consistency.keyword_proj", dim, rng);
  p.correlation = make_projector(reg, "consistency.correlation_proj", dim, rng);
  return p;
}

ConsistencyLosses consistency_losses(const Tensor& caption_tokens, const Tensor& prototype_tokens,
                                     const Tensor& keyword_tokens, const Tensor& correlation_tokens,
                                     const ConsistencyParams& p) {
  ConsistencyLosses out;
  out.sim_im = sim_loss(pool_and_project(caption_tokens, p.caption),
                        pool_and_project(prototype_tokens, p.prototype));
  out.sim_dt = sim_loss(pool_and_project(keyword_tokens, p.keywords),
                        pool_and_project(correlation_tokens, p.correlation));
  return out;
}

}  // namespace comg
