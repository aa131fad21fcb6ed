#include "comg/backbone.hpp"

#include <stdexcept>

namespace comg {

BackboneParams make_backbone(ParamRegistry& reg, const BackboneConfig& cfg, Rng& rng) {
  BackboneParams p;
  p.cfg = cfg;
  int in_ch = 1;
  for (int s = 0; s < 4; ++s) {
    const int out_ch = cfg.channels[static_cast<size_t>(s)];
    const std::string prefix = "backbone.stage" + std::to_string(s + 1);
    p.kernels[static_cast<size_t>(s)] = reg.create(prefix + ".kernel", {out_ch, in_ch, 3, 3}, Init::XavierUniform, rng);
    p.biases[static_cast<size_t>(s)] = reg.create(prefix + ".bias", {out_ch}, Init::Zeros, rng);
    in_ch = out_ch;
  }
  p.fhigh_w = reg.create("backbone.fhigh_proj.weight", {cfg.channels[3], cfg.dim}, Init::XavierUniform, rng);
  p.fhigh_b = reg.create("backbone.fhigh_proj.bias", {cfg.dim}, Init::Zeros, rng);
  return p;
}

namespace {
// [C,H,W] -> [H*W, C] token sequence
Tensor grid_tokens(const Tensor& x) {
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {c, hw}));
}
}  // namespace

VisualFeatures extract_features(const std::vector<Tensor>& views, const BackboneParams& p) {
  if (views.empty() || views.size() > 2)
    throw std::invalid_argument("extract_features: expected 1 or 2 views, got " + std::to_string(views.size()));
  VisualFeatures out;
  std::vector<Tensor> high_tokens;
  for (size_t v = 0; v < views.size(); ++v) {
    Tensor x = views[v];
    for (int s = 0; s < 4; ++s) {
      x = relu(conv2d(x, p.kernels[static_cast<size_t>(s)], p.biases[static_cast<size_t>(s)], /*stride=*/2,
                      /*padding=*/1));
      if (s == 1 && v == 0) out.f_low = x;
    }
    high_tokens.push_back(linear(grid_tokens(x), p.fhigh_w, p.fhigh_b));
  }
  out.f_high = high_tokens.size() == 1 ? high_tokens[0] : concat_rows(high_tokens);
  return out;
}

RefinerParams make_refiner(ParamRegistry& reg, const std::string& prefix, int in_channels, int width,
                           int dim, Rng& rng) {
  RefinerParams p;
  p.in_channels = in_channels;
  p.width = width;
  p.dim = dim;
  int ch = in_channels;
  for (int b = 0; b < 2; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b + 1);
    auto& blk = p.blocks[static_cast<size_t>(b)];
    blk.k1 = reg.create(bp + ".conv1.kernel", {width, ch, 3, 3}, Init::XavierUniform, rng);
    blk.b1 = reg.create(bp + ".conv1.bias", {width}, Init::Zeros, rng);
    blk.k2 = reg.create(bp + ".conv2.kernel", {width, width, 3, 3}, Init::XavierUniform, rng);
    blk.b2 = reg.create(bp + ".conv2.bias", {width}, Init::Zeros, rng);
    blk.skip_k = reg.create(bp + ".skip.kernel", {width, ch, 1, 1}, Init::XavierUniform, rng);
    blk.skip_b = reg.create(bp + ".skip.bias", {width}, Init::Zeros, rng);
    ch = width;
  }
  p.proj_w = reg.create(prefix + ".token_proj.weight", {width, dim}, Init::XavierUniform, rng);
  p.proj_b = reg.create(prefix + ".token_proj.bias", {dim}, Init::Zeros, rng);
  return p;
}

int refiner_receptive_field_radius() {
  // conv chain: (k3,s2)(k3,s1)(k3,s2)(k3,s1) then 1x1 projections
  int rf = 1, jump = 1;
  const int kernel[] = {3, 3, 3, 3};
  const int stride[] = {2, 1, 2, 1};
  for (int i = 0; i < 4; ++i) {
    rf += (kernel[i] - 1) * jump;
    jump *= stride[i];
  }
  return (rf - 1) / 2;
}

namespace {
Tensor refiner_block(const Tensor& x, const RefinerParams::Block& blk) {
  Tensor h = relu(conv2d(x, blk.k1, blk.b1, /*stride=*/2, /*padding=*/1));
  h = conv2d(h, blk.k2, blk.b2, /*stride=*/1, /*padding=*/1);
  Tensor skip = conv2d(x, blk.skip_k, blk.skip_b, /*stride=*/2, /*padding=*/0);
  return relu(add(h, skip));
}
}  // namespace

Tensor extract_prototype(const Tensor& f_low, const Tensor& mask, const RefinerParams& p) {
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != f_low.dim(1) || mask.dim(2) != f_low.dim(2))
    op_shape_error("extract_prototype mask", f_low.shape(), mask.shape());
  for (double v : mask.data())
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("extract_prototype: mask must be binary");
  Tensor x = pointwise_mul(f_low, mask);
  x = refiner_block(x, p.blocks[0]);
  x = refiner_block(x, p.blocks[1]);
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor tokens = transpose(reshape(x, {c, hw}));
  return linear(tokens, p.proj_w, p.proj_b);
}

OrganPrototypes extract_all_prototypes(const Tensor& f_low, const std::array<Tensor, kNumOrgans>& masks,
                                       const RefinerParams& p) {
  OrganPrototypes out;
  for (Organ og : kOrgans) {
    const auto& m = masks[static_cast<size_t>(og)];
    if (!m.defined()) throw std::invalid_argument("extract_all_prototypes: missing mask for " + organ_name(og));
    out.p[static_cast<size_t>(og)] = extract_prototype(f_low, m, p);
  }
  return out;
}

Tensor grid_to_tensor(const Grid& g) { return Tensor::from({1, g.h, g.w}, g.v); }

Tensor mask_to_lowres_tensor(const Grid& mask, int h, int w) {
  return grid_to_tensor(resize_mask_nearest(mask, h, w));
}

}  // namespace comg
