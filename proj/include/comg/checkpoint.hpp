#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "comg/adam.hpp"
#include "comg/model.hpp"

namespace comg {

// Binary checkpoint: magic "COMG", version, config hash, epoch, rng state,
// model config, vocabulary, named parameter table, optional optimizer
// moments. Little-endian, round-trips bit for bit.
inline constexpr char kCheckpointMagic[4] = {'C', 'O', 'M', 'G'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  uint64_t config_hash = 0;
  uint32_t epoch = 0;
  std::array<uint64_t, 4> rng_state{};
  ModelConfig model_cfg;
  std::vector<std::string> vocab_tokens;  // non-reserved, id order
  std::map<std::string, std::pair<Shape, std::vector<double>>> params;
  std::optional<AdamOptimizer::State> optimizer;
};

void save_checkpoint(const std::string& path, const ComgModel& model, const AdamOptimizer* opt,
                     uint32_t epoch, const std::array<uint64_t, 4>& rng_state, uint64_t config_hash);

CheckpointData read_checkpoint(const std::string& path);

// copies stored values into an existing model; throws on the first
// missing or shape-mismatched parameter, naming it
void apply_checkpoint(const CheckpointData& data, ComgModel& model);

// rebuilds the model from the stored config and vocabulary
std::unique_ptr<ComgModel> model_from_checkpoint(const CheckpointData& data, const DiseaseGraph& graph);

}  // namespace comg
