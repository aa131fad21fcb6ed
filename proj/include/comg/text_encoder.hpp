#pragma once

#include <string>
#include <vector>

#include "comg/attention.hpp"
#include "comg/params.hpp"

namespace comg {

struct TextEncoderParams {
  Tensor embedding;  // [vocab, dim]
  std::vector<EncoderLayerParams> layers;
  LayerNormParams final_ln;
  int dim = 0;
};

TextEncoderParams make_text_encoder(ParamRegistry& reg, const std::string& prefix, int vocab_size, int dim,
                                    int heads, int layers, int ffn_hidden, Rng& rng);

// token embedding + sinusoidal positions through the encoder stack -> [N, dim]
Tensor encode_text(const std::vector<int>& ids, const TextEncoderParams& p);

}  // namespace comg
