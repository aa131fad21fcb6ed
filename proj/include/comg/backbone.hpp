#pragma once

#include <array>
#include <string>
#include <vector>

#include "comg/attention.hpp"
#include "comg/corpus.hpp"
#include "comg/ops.hpp"
#include "comg/params.hpp"

namespace comg {

struct BackboneConfig {
  std::array<int, 4> channels{16, 32, 64, 64};
  int refiner_channels = 32;
  int dim = 64;  // token width of f_high and prototypes
};

// four stride-2 conv stages; f_low taps stage 2, f_high flattens stage 4
struct BackboneParams {
  std::array<Tensor, 4> kernels, biases;
  Tensor fhigh_w, fhigh_b;  // channel -> dim projection for f_high tokens
  BackboneConfig cfg;
};

BackboneParams make_backbone(ParamRegistry& reg, const BackboneConfig& cfg, Rng& rng);

struct VisualFeatures {
  Tensor f_low;   // [C_l, H_l, W_l]
  Tensor f_high;  // [N_v, dim]
};

// 1 or 2 views; two-view f_high token sequences are concatenated,
// f_low comes from view 1
VisualFeatures extract_features(const std::vector<Tensor>& views, const BackboneParams& p);

// two stride-2 residual conv blocks over the masked f_low, then a channel->dim
// projection of the flattened grid
struct RefinerParams {
  struct Block {
    Tensor k1, b1, k2, b2, skip_k, skip_b;
  };
  std::array<Block, 2> blocks;
  Tensor proj_w, proj_b;
  int in_channels = 0, width = 0, dim = 0;
};

RefinerParams make_refiner(ParamRegistry& reg, const std::string& prefix, int in_channels, int width,
                           int dim, Rng& rng);

// radius, in f_low pixels, beyond which an input cannot influence any output
int refiner_receptive_field_radius();

// mask must already be at f_low resolution and strictly {0,1}
Tensor extract_prototype(const Tensor& f_low, const Tensor& mask, const RefinerParams& p);

struct OrganPrototypes {
  std::array<Tensor, kNumOrgans> p;  // each [N_p, dim]
};

OrganPrototypes extract_all_prototypes(const Tensor& f_low, const std::array<Tensor, kNumOrgans>& masks,
                                       const RefinerParams& p);

// grid helpers at the model boundary
Tensor grid_to_tensor(const Grid& g);                       // [1,H,W] leaf
Tensor mask_to_lowres_tensor(const Grid& mask, int h, int w);  // nearest resize, [1,h,w]

}  // namespace comg
