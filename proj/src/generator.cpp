#include "comg/generator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "comg/corpus.hpp"
#include "comg/ops.hpp"

namespace comg {

GeneratorParams make_generator(ParamRegistry& reg, int vocab_size, int dim, int heads, int decoder_layers,
                               int memory_layers, int ffn_hidden, int max_len, Rng& rng) {
  GeneratorParams p;
  p.dim = dim;
  p.heads = heads;
  p.max_len = max_len;
  p.vocab = vocab_size;
  p.fuse_ln = make_layer_norm(reg, "fuse.ln", dim, rng);
  p.fuse_attn = make_attention(reg, "fuse.attn", dim, heads, rng);
  for (int l = 0; l < memory_layers; ++l)
    p.mem_layers.push_back(make_encoder_layer(reg, "memenc.layer" + std::to_string(l + 1), dim, heads,
                                              ffn_hidden, rng));
  p.mem_final_ln = make_layer_norm(reg, "memenc.final_ln", dim, rng);
  p.tok_embedding = reg.create("decoder.embedding", {vocab_size, dim}, Init::XavierUniform, rng);
  for (int l = 0; l < decoder_layers; ++l)
    p.layers.push_back(make_decoder_layer(reg, "decoder.layer" + std::to_string(l + 1), dim, heads,
                                          ffn_hidden, rng));
  p.final_ln = make_layer_norm(reg, "decoder.final_ln", dim, rng);
  p.head_w = reg.create("decoder.head.weight", {dim, vocab_size}, Init::XavierUniform, rng);
  p.head_b = reg.create("decoder.head.bias", {vocab_size}, Init::Zeros, rng);
  return p;
}

Tensor fuse(const Tensor& f_high, const Tensor& fusion_memory, const GeneratorParams& p) {
  return cross_attention_block(f_high, fusion_memory, p.fuse_ln, p.fuse_attn);
}

Tensor encode_fused_memory(const Tensor& f_high, const Tensor& fusion_memory, const GeneratorParams& p) {
  Tensor x = fuse(f_high, fusion_memory, p);
  for (const auto& layer : p.mem_layers) x = encoder_layer(x, layer);
  return apply_ln(x, p.mem_final_ln);
}

Tensor decode_logits(const std::vector<int>& prefix, const Tensor& memory, const GeneratorParams& p) {
  if (prefix.empty() || prefix[0] != Vocabulary::kBegin)
    throw std::invalid_argument("decode_logits: prefix must start with the begin token");
  if (static_cast<int>(prefix.size()) > p.max_len + 1)
    throw std::invalid_argument("decode_logits: prefix of " + std::to_string(prefix.size()) +
                                " tokens exceeds max_len " + std::to_string(p.max_len));
  Tensor x = embedding(prefix, p.tok_embedding);
  x = add(x, sinusoidal_positions(static_cast<int>(prefix.size()), p.dim));
  for (const auto& layer : p.layers) x = decoder_layer(x, memory, layer);
  x = apply_ln(x, p.final_ln);
  return linear(x, p.head_w, p.head_b);
}

// ---- incremental decoding -------------------------------------------------
// The kernels below mirror the graph ops exactly: linear accumulates over the
// input index before adding the bias, layer norm divides by d then d again,
// attention scales after the dot product. Keeping the summation order equal
// makes the stream reproduce decode_logits bit for bit.

namespace {

void vec_linear(const double* x, const Tensor& w, const Tensor& b, double* out) {
  const int k = w.dim(0), m = w.dim(1);
  const double* wv = w.data().data();
  const double* bv = b.data().data();
  for (int j = 0; j < m; ++j) out[j] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double xp = x[p];
    const double* wrow = wv + static_cast<size_t>(p) * m;
    for (int j = 0; j < m; ++j) out[j] += xp * wrow[j];
  }
  for (int j = 0; j < m; ++j) out[j] += bv[j];
}

void vec_layer_norm(const double* x, const Tensor& gamma, const Tensor& beta, int d, double* out,
                    double eps = 1e-8) {
  double mean = 0.0;
  for (int j = 0; j < d; ++j) mean += x[j];
  mean /= d;
  double var = 0.0;
  for (int j = 0; j < d; ++j) {
    const double c = x[j] - mean;
    var += c * c;
  }
  var /= d;
  const double is = 1.0 / std::sqrt(var + eps);
  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  for (int j = 0; j < d; ++j) out[j] = (x[j] - mean) * is * gv[j] + bv[j];
}

void vec_softmax_inplace(double* x, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    z += x[j];
  }
  for (int j = 0; j < n; ++j) x[j] /= z;
}

double vec_lse(const double* x, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) z += std::exp(x[j] - mx);
  return mx + std::log(z);
}

// single-query attention over cached keys/values (flat [n, dim] buffers)
void attend_one(const double* q, const std::vector<double>& keys, const std::vector<double>& values,
                int n, int dim, int heads, const Tensor& wo, const Tensor& bo, double* out) {
  const int dh = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> merged(static_cast<size_t>(dim), 0.0);
  std::vector<double> scores(static_cast<size_t>(n));
  for (int h = 0; h < heads; ++h) {
    const int o = h * dh;
    for (int j = 0; j < n; ++j) {
      const double* krow = keys.data() + static_cast<size_t>(j) * dim + o;
      double s = 0.0;
      for (int d = 0; d < dh; ++d) s += q[o + d] * krow[d];
      scores[static_cast<size_t>(j)] = s * inv_scale;
    }
    vec_softmax_inplace(scores.data(), n);
    for (int j = 0; j < n; ++j) {
      const double wj = scores[static_cast<size_t>(j)];
      const double* vrow = values.data() + static_cast<size_t>(j) * dim + o;
      for (int d = 0; d < dh; ++d) merged[static_cast<size_t>(o + d)] += wj * vrow[d];
    }
  }
  vec_linear(merged.data(), wo, bo, out);
}

}  // namespace

struct DecoderStream::MemoryCache {
  // per decoder layer: cross-attention keys/values over the memory, flat [M, dim]
  std::vector<std::vector<double>> k, v;
  int mem_len = 0;
};

DecoderStream::DecoderStream(const GeneratorParams& p, const Tensor& memory) : p_(&p) {
  if (memory.rank() != 2 || memory.dim(1) != p.dim)
    op_shape_error("decoder memory", memory.shape(), {p.dim, p.dim});
  auto cache = std::make_shared<MemoryCache>();
  const int m = memory.dim(0);
  cache->mem_len = m;
  cache->k.resize(p.layers.size());
  cache->v.resize(p.layers.size());
  for (size_t l = 0; l < p.layers.size(); ++l) {
    cache->k[l].resize(static_cast<size_t>(m) * p.dim);
    cache->v[l].resize(static_cast<size_t>(m) * p.dim);
    for (int i = 0; i < m; ++i) {
      const double* row = memory.data().data() + static_cast<size_t>(i) * p.dim;
      vec_linear(row, p.layers[l].cross_attn.wk, p.layers[l].cross_attn.bk,
                 cache->k[l].data() + static_cast<size_t>(i) * p.dim);
      vec_linear(row, p.layers[l].cross_attn.wv, p.layers[l].cross_attn.bv,
                 cache->v[l].data() + static_cast<size_t>(i) * p.dim);
    }
  }
  mem_ = std::move(cache);
  self_k_.resize(p.layers.size());
  self_v_.resize(p.layers.size());
  logits_.resize(static_cast<size_t>(p.vocab));
}

const std::vector<double>& DecoderStream::step(int token) {
  const GeneratorParams& p = *p_;
  if (pos_ >= p.max_len + 1)
    throw std::invalid_argument("decoder stream: prefix of " + std::to_string(pos_ + 1) +
                                " tokens exceeds max_len " + std::to_string(p.max_len));
  if (token < 0 || token >= p.vocab)
    throw std::invalid_argument("decoder stream: token " + std::to_string(token) + " out of vocabulary");
  const int dim = p.dim;
  std::vector<double> x(static_cast<size_t>(dim));
  const double* emb = p.tok_embedding.data().data() + static_cast<size_t>(token) * dim;
  for (int j = 0; j < dim; ++j) x[static_cast<size_t>(j)] = emb[j] + sinusoid_position_value(pos_, j, dim);

  std::vector<double> h(static_cast<size_t>(dim)), attn(static_cast<size_t>(dim));
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    // causal self-attention over the cached prefix plus this position
    vec_layer_norm(x.data(), layer.ln1.gamma, layer.ln1.beta, dim, h.data());
    std::vector<double> q(static_cast<size_t>(dim)), kn(static_cast<size_t>(dim)), vn(static_cast<size_t>(dim));
    vec_linear(h.data(), layer.self_attn.wq, layer.self_attn.bq, q.data());
    vec_linear(h.data(), layer.self_attn.wk, layer.self_attn.bk, kn.data());
    vec_linear(h.data(), layer.self_attn.wv, layer.self_attn.bv, vn.data());
    self_k_[l].insert(self_k_[l].end(), kn.begin(), kn.end());
    self_v_[l].insert(self_v_[l].end(), vn.begin(), vn.end());
    attend_one(q.data(), self_k_[l], self_v_[l], pos_ + 1, dim, layer.self_attn.heads,
               layer.self_attn.wo, layer.self_attn.bo, attn.data());
    for (int j = 0; j < dim; ++j) x[static_cast<size_t>(j)] += attn[static_cast<size_t>(j)];

    vec_layer_norm(x.data(), layer.ln2.gamma, layer.ln2.beta, dim, h.data());
    vec_linear(h.data(), layer.cross_attn.wq, layer.cross_attn.bq, q.data());
    attend_one(q.data(), mem_->k[l], mem_->v[l], mem_->mem_len, dim, layer.cross_attn.heads,
               layer.cross_attn.wo, layer.cross_attn.bo, attn.data());
    for (int j = 0; j < dim; ++j) x[static_cast<size_t>(j)] += attn[static_cast<size_t>(j)];

    vec_layer_norm(x.data(), layer.ln3.gamma, layer.ln3.beta, dim, h.data());
    std::vector<double> mid(static_cast<size_t>(layer.ffn.w1.dim(1)));
    vec_linear(h.data(), layer.ffn.w1, layer.ffn.b1, mid.data());
    for (double& v : mid) v = v > 0.0 ? v : 0.0;
    vec_linear(mid.data(), layer.ffn.w2, layer.ffn.b2, attn.data());
    for (int j = 0; j < dim; ++j) x[static_cast<size_t>(j)] += attn[static_cast<size_t>(j)];
  }
  vec_layer_norm(x.data(), p.final_ln.gamma, p.final_ln.beta, dim, h.data());
  vec_linear(h.data(), p.head_w, p.head_b, logits_.data());
  ++pos_;
  return logits_;
}

// ---- search ---------------------------------------------------------------

namespace {

int argmax_lowest_id(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

double normalized_score(double lp, int len, double penalty) {
  return lp / std::pow(static_cast<double>(len), penalty);
}

}  // namespace

DecodeResult greedy_decode_full(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg) {
  if (cfg.max_len < 2) throw std::invalid_argument("generation max_len must be >= 2");
  const int max_len = std::min(cfg.max_len, p.max_len);  // decoder position limit
  DecodeResult r;
  DecoderStream stream(p, memory);
  const std::vector<double>* logits = &stream.step(Vocabulary::kBegin);
  while (static_cast<int>(r.body.size()) < max_len) {
    const int tok = argmax_lowest_id(*logits);
    r.log_prob += (*logits)[static_cast<size_t>(tok)] - vec_lse(logits->data(), p.vocab);
    if (tok == Vocabulary::kEnd) {
      r.ended = true;
      break;
    }
    r.body.push_back(tok);
    if (static_cast<int>(r.body.size()) == max_len) break;
    logits = &stream.step(tok);
  }
  const int len = static_cast<int>(r.body.size()) + (r.ended ? 1 : 0);
  r.score = normalized_score(r.log_prob, std::max(len, 1), cfg.length_penalty);
  return r;
}

std::vector<int> greedy_decode(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg) {
  return greedy_decode_full(memory, p, cfg).body;
}

DecodeResult beam_search_full(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                              BeamTrace* trace) {
  if (cfg.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (cfg.max_len < 2) throw std::invalid_argument("generation max_len must be >= 2");
  const int max_len = std::min(cfg.max_len, p.max_len);
  if (trace) trace->step_scores.clear();

  struct Hyp {
    std::vector<int> body;
    double lp = 0.0;
    DecoderStream stream;
    std::vector<double> logits;  // distribution over the next token
  };

  std::vector<Hyp> beams;
  {
    DecoderStream root(p, memory);
    std::vector<double> logits = root.step(Vocabulary::kBegin);
    beams.push_back(Hyp{{}, 0.0, std::move(root), std::move(logits)});
  }
  std::vector<DecodeResult> completed;

  for (int step = 0; step < max_len && !beams.empty(); ++step) {
    struct Cand {
      double lp;
      int beam_idx;
      int token;
    };
    std::vector<Cand> cands;
    cands.reserve(beams.size() * static_cast<size_t>(p.vocab));
    for (int bi = 0; bi < static_cast<int>(beams.size()); ++bi) {
      const auto& logits = beams[static_cast<size_t>(bi)].logits;
      const double lse = vec_lse(logits.data(), p.vocab);
      for (int t = 0; t < p.vocab; ++t)
        cands.push_back(
            Cand{beams[static_cast<size_t>(bi)].lp + (logits[static_cast<size_t>(t)] - lse), bi, t});
    }
    // all candidates at this step share a length, so raw log-prob ranks them;
    // ties resolve to the lexicographically smaller continuation
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.lp != b.lp) return a.lp > b.lp;
      const auto& ba = beams[static_cast<size_t>(a.beam_idx)].body;
      const auto& bb = beams[static_cast<size_t>(b.beam_idx)].body;
      if (ba != bb) return std::lexicographical_compare(ba.begin(), ba.end(), bb.begin(), bb.end());
      return a.token < b.token;
    });

    const int keep = std::min<int>(cfg.beam_width, static_cast<int>(cands.size()));
    std::vector<Hyp> next;
    std::vector<double> kept_scores;
    for (int c = 0; c < keep; ++c) {
      const Cand& cand = cands[static_cast<size_t>(c)];
      kept_scores.push_back(normalized_score(cand.lp, step + 1, cfg.length_penalty));
      const Hyp& parent = beams[static_cast<size_t>(cand.beam_idx)];
      if (cand.token == Vocabulary::kEnd) {
        DecodeResult r;
        r.body = parent.body;
        r.ended = true;
        r.log_prob = cand.lp;
        r.score = normalized_score(cand.lp, step + 1, cfg.length_penalty);
        completed.push_back(std::move(r));
      } else if (step + 1 < max_len) {
        next.push_back(Hyp{parent.body, cand.lp, parent.stream, {}});
        Hyp& h = next.back();
        h.body.push_back(cand.token);
        h.logits = h.stream.step(cand.token);
      } else {
        // length cut: becomes a finished hypothesis without an end token
        DecodeResult r;
        r.body = parent.body;
        r.body.push_back(cand.token);
        r.ended = false;
        r.log_prob = cand.lp;
        r.score = normalized_score(cand.lp, step + 1, cfg.length_penalty);
        completed.push_back(std::move(r));
      }
    }
    if (trace) trace->step_scores.push_back(std::move(kept_scores));
    beams = std::move(next);
  }

  const DecodeResult* best = nullptr;
  for (const auto& r : completed) {
    if (!best || r.score > best->score ||
        (r.score == best->score && std::lexicographical_compare(r.body.begin(), r.body.end(),
                                                                best->body.begin(), best->body.end())))
      best = &r;
  }
  DecodeResult result = best ? *best : DecodeResult{};
  if (cfg.beam_width > 1) {
    // pruning can drop the greedy trajectory; keep it as a floor so wider
    // beams never return a worse-scoring hypothesis than width 1
    DecodeResult g = greedy_decode_full(memory, p, cfg);
    if (!best || g.score > result.score) result = std::move(g);
  }
  return result;
}

std::vector<int> beam_search(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                             BeamTrace* trace) {
  return beam_search_full(memory, p, cfg, trace).body;
}

DecodeResult sample_decode(const Tensor& memory, const GeneratorParams& p, const GenerationConfig& cfg,
                           Rng& rng) {
  if (cfg.max_len < 2) throw std::invalid_argument("generation max_len must be >= 2");
  const int max_len = std::min(cfg.max_len, p.max_len);
  DecodeResult r;
  DecoderStream stream(p, memory);
  const std::vector<double>* logits = &stream.step(Vocabulary::kBegin);
  std::vector<double> probs(static_cast<size_t>(p.vocab));
  while (static_cast<int>(r.body.size()) < max_len) {
    std::copy(logits->begin(), logits->end(), probs.begin());
    vec_softmax_inplace(probs.data(), p.vocab);
    const double u = rng.uniform();
    double acc = 0.0;
    int tok = p.vocab - 1;
    for (int t = 0; t < p.vocab; ++t) {
      acc += probs[static_cast<size_t>(t)];
      if (u < acc) {
        tok = t;
        break;
      }
    }
    r.log_prob += (*logits)[static_cast<size_t>(tok)] - vec_lse(logits->data(), p.vocab);
    if (tok == Vocabulary::kEnd) {
      r.ended = true;
      break;
    }
    r.body.push_back(tok);
    if (static_cast<int>(r.body.size()) == max_len) break;
    logits = &stream.step(tok);
  }
  const int len = static_cast<int>(r.body.size()) + (r.ended ? 1 : 0);
  r.score = normalized_score(r.log_prob, std::max(len, 1), cfg.length_penalty);
  return r;
}

}  // namespace comg
