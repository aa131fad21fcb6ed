#include "comg/text_encoder.hpp"

#include <stdexcept>

#include "comg/ops.hpp"

namespace comg {

TextEncoderParams make_text_encoder(ParamRegistry& reg, const std::string& prefix, int vocab_size, int dim,
                                    int heads, int layers, int ffn_hidden, Rng& rng) {
  TextEncoderParams p;
  p.dim = dim;
  p.embedding = reg.create(prefix + ".embedding", {vocab_size, dim}, Init::XavierUniform, rng);
  for (int l = 0; l < layers; ++l)
    p.layers.push_back(make_encoder_layer(reg, prefix + ".layer" + std::to_string(l + 1), dim, heads,
                                          ffn_hidden, rng));
  p.final_ln = make_layer_norm(reg, prefix + ".final_ln", dim, rng);
  return p;
}

Tensor encode_text(const std::vector<int>& ids, const TextEncoderParams& p) {
  if (ids.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  Tensor x = embedding(ids, p.embedding);
  x = add(x, sinusoidal_positions(static_cast<int>(ids.size()), p.dim));
  for (const auto& layer : p.layers) x = encoder_layer(x, layer);
  return apply_ln(x, p.final_ln);
}

}  // namespace comg
