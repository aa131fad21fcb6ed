#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "comg/backbone.hpp"
#include "comg/consistency.hpp"
#include "comg/corpus.hpp"
#include "comg/dimf.hpp"
#include "comg/generator.hpp"
#include "comg/text_encoder.hpp"

namespace comg {

struct ModelConfig {
  int dim = 64;
  int heads = 4;
  std::array<int, 4> backbone_channels{16, 32, 64, 64};
  int refiner_channels = 32;
  int text_layers = 1;
  int memory_layers = 1;
  int decoder_layers = 3;
  int ffn_mult = 4;
  int max_len = 48;
  uint64_t init_seed = 42;

  bool operator==(const ModelConfig&) const = default;
};

// Full report-generation model: backbone + mask-guided prototypes, disease
// caption encoder, cross-modal fusion, and the transformer decoder.
class ComgModel {
 public:
  ComgModel(const ModelConfig& cfg, const Vocabulary& vocab, const DiseaseGraph& graph);

  struct MemoryBuild {
    VisualFeatures feats;
    OrganPrototypes protos;
    CorrelationTokens toks;
    Tensor fusion_memory;  // compress_concat output
    Tensor memory;         // decoder key/value memory
  };
  // image + masks + disease graph only; never reads the report
  MemoryBuild build_memory_full(const Sample& s) const;
  Tensor build_memory(const Sample& s) const { return build_memory_full(s).memory; }

  struct ForwardResult {
    Tensor logits;
    Tensor ce;
    Tensor sim_im;
    Tensor sim_dt;
    bool truncated = false;
    MemoryBuild mem;
  };
  // teacher-forced losses; the report feeds only the loss heads
  ForwardResult forward_train(const Sample& s) const;

  // log-probability of a given generated body under the current decoder
  Tensor body_log_prob(const Tensor& memory, const std::vector<int>& body, bool ended) const;

  // teacher-forced token cross-entropy of the sample's report against a
  // prebuilt memory (shared between the RL and CE objectives)
  Tensor report_cross_entropy(const Tensor& memory, const Sample& s, bool* truncated = nullptr) const;

  std::vector<int> generate_greedy(const Sample& s, const GenerationConfig& gen) const;
  std::vector<int> generate_beam(const Sample& s, const GenerationConfig& gen) const;
  std::vector<std::string> generate_words(const Sample& s, const GenerationConfig& gen) const;


  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const DiseaseGraph& graph() const { return graph_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }

  // sub-module parameters, exposed for tests and the gradient-check suites
  BackboneParams backbone;
  RefinerParams refiner;
  TextEncoderParams text;
  DimfParams dimf;
  ConsistencyParams consistency;
  GeneratorParams generator;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  DiseaseGraph graph_;
  ParamRegistry reg_;
  std::array<std::vector<int>, kNumOrgans> caption_ids_;
  std::vector<int> no_finding_ids_;
};

}  // namespace comg
