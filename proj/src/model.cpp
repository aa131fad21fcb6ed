#include "comg/model.hpp"

#include <stdexcept>

#include "comg/ops.hpp"

namespace comg {

ComgModel::ComgModel(const ModelConfig& cfg, const Vocabulary& vocab, const DiseaseGraph& graph)
    : cfg_(cfg), vocab_(vocab), graph_(graph) {
  Rng rng(cfg.init_seed);
  const int ffn_hidden = cfg.dim * cfg.ffn_mult;
  backbone = make_backbone(reg_, BackboneConfig{cfg.backbone_channels, cfg.refiner_channels, cfg.dim}, rng);
  refiner = make_refiner(reg_, "refiner", cfg.backbone_channels[1], cfg.refiner_channels, cfg.dim, rng);
  text = make_text_encoder(reg_, "text", vocab_.size(), cfg.dim, cfg.heads, cfg.text_layers, ffn_hidden, rng);
  dimf = make_dimf(reg_, cfg.dim, cfg.heads, rng);
  consistency = make_consistency(reg_, cfg.dim, rng);
  generator = make_generator(reg_, vocab_.size(), cfg.dim, cfg.heads, cfg.decoder_layers, cfg.memory_layers,
                             ffn_hidden, cfg.max_len, rng);
  caption_ids_ = caption_token_ids(graph_, vocab_);
  no_finding_ids_ = vocab_.encode("no finding", /*add_markers=*/true);
}

ComgModel::MemoryBuild ComgModel::build_memory_full(const Sample& s) const {
  MemoryBuild mb;
  mb.feats = extract_features({grid_to_tensor(s.image)}, backbone);
  const int hl = mb.feats.f_low.dim(1), wl = mb.feats.f_low.dim(2);
  std::array<Tensor, kNumOrgans> masks;
  for (Organ og : kOrgans)
    masks[static_cast<size_t>(og)] = mask_to_lowres_tensor(s.masks[static_cast<size_t>(og)], hl, wl);
  mb.protos = extract_all_prototypes(mb.feats.f_low, masks, refiner);

  const DiseaseEmbeddings dis = encode_disease_captions(caption_ids_, text);
  for (Organ og : kOrgans)
    mb.toks.tok[static_cast<size_t>(og)] =
        dimf_forward(mb.protos.p[static_cast<size_t>(og)], dis.l[static_cast<size_t>(og)], dimf);
  mb.toks.tok_glb = fuse_global(mb.toks.tok, dimf.reweight);
  mb.fusion_memory = compress_concat(mb.toks.tok_glb, mb.protos, dimf);
  mb.memory = encode_fused_memory(mb.feats.f_high, mb.fusion_memory, generator);
  return mb;
}

namespace {
std::vector<int> clip_report_ids(std::vector<int> ids, int max_len, bool* truncated) {
  const int body = static_cast<int>(ids.size()) - 2;
  if (body < 0) throw std::invalid_argument("sample has no report");
  bool trunc = false;
  if (body > max_len) {
    ids.resize(static_cast<size_t>(max_len) + 1);
    ids.push_back(Vocabulary::kEnd);
    trunc = true;
  }
  if (truncated) *truncated = trunc;
  return ids;
}
}  // namespace

Tensor ComgModel::report_cross_entropy(const Tensor& memory, const Sample& s, bool* truncated) const {
  std::vector<int> ids = s.report_ids;
  if (ids.empty()) ids = vocab_.encode(s.report, /*add_markers=*/true);
  ids = clip_report_ids(std::move(ids), cfg_.max_len, truncated);
  const std::vector<int> input(ids.begin(), ids.end() - 1);
  const std::vector<int> targets(ids.begin() + 1, ids.end());
  return cross_entropy(decode_logits(input, memory, generator), targets, Vocabulary::kPad);
}

ComgModel::ForwardResult ComgModel::forward_train(const Sample& s) const {
  ForwardResult r;
  r.mem = build_memory_full(s);

  std::vector<int> ids = s.report_ids;
  if (ids.empty()) ids = vocab_.encode(s.report, /*add_markers=*/true);
  ids = clip_report_ids(std::move(ids), cfg_.max_len, &r.truncated);
  const std::vector<int> input(ids.begin(), ids.end() - 1);
  const std::vector<int> targets(ids.begin() + 1, ids.end());
  r.logits = decode_logits(input, r.mem.memory, generator);
  r.ce = cross_entropy(r.logits, targets, Vocabulary::kPad);

  // consistency heads: ground-truth caption and extracted keywords
  Tensor caption_tokens = encode_text(ids, text);
  std::vector<Tensor> proto_list, tok_list;
  for (Organ og : kOrgans) {
    proto_list.push_back(r.mem.protos.p[static_cast<size_t>(og)]);
    tok_list.push_back(r.mem.toks.tok[static_cast<size_t>(og)]);
  }
  const auto keywords = extract_disease_keywords(tokenize_words(s.report), graph_);
  std::vector<int> kw_ids;
  if (keywords.empty()) {
    kw_ids = no_finding_ids_;
  } else {
    kw_ids = vocab_.encode(join_words(keywords), /*add_markers=*/true);
  }
  Tensor keyword_tokens = encode_text(kw_ids, text);
  const ConsistencyLosses cl = consistency_losses(caption_tokens, concat_rows(proto_list), keyword_tokens,
                                                  concat_rows(tok_list), consistency);
  r.sim_im = cl.sim_im;
  r.sim_dt = cl.sim_dt;
  return r;
}

Tensor ComgModel::body_log_prob(const Tensor& memory, const std::vector<int>& body, bool ended) const {
  std::vector<int> input = {Vocabulary::kBegin};
  input.insert(input.end(), body.begin(), body.end());
  std::vector<int> targets = body;
  if (ended) {
    targets.push_back(Vocabulary::kEnd);
  } else {
    // without an end emission the last input token predicts nothing
    input.pop_back();
    if (targets.empty()) throw std::invalid_argument("body_log_prob: empty unterminated body");
  }
  Tensor logits = decode_logits(input, memory, generator);
  return sequence_log_prob(logits, targets);
}

std::vector<int> ComgModel::generate_greedy(const Sample& s, const GenerationConfig& gen) const {
  NoGradGuard ng;
  return greedy_decode(build_memory(s), generator, gen);
}

std::vector<int> ComgModel::generate_beam(const Sample& s, const GenerationConfig& gen) const {
  NoGradGuard ng;
  return beam_search(build_memory(s), generator, gen);
}

std::vector<std::string> ComgModel::generate_words(const Sample& s, const GenerationConfig& gen) const {
  return vocab_.decode_words(generate_beam(s, gen));
}

}  // namespace comg
