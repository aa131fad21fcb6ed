#pragma once

#include <cstdint>
#include <string>

#include "comg/corpus.hpp"
#include "comg/generator.hpp"
#include "comg/model.hpp"
#include "comg/trainer.hpp"

namespace comg {

// Sectioned key = value run configuration. Every key has a default; unknown
// sections or keys are rejected. The resolved form is echoed verbatim into
// each run directory so runs are diffable and reproducible.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  GenerationConfig generation;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// canonical echo: fixed section and key order
std::string run_config_text(const RunConfig& cfg);

// FNV-1a over the canonical echo
uint64_t run_config_hash(const RunConfig& cfg);

}  // namespace comg
