#pragma once

#include <functional>
#include <string>
#include <vector>

#include "comg/adam.hpp"
#include "comg/generator.hpp"
#include "comg/metrics.hpp"
#include "comg/model.hpp"

namespace comg {

struct TrainConfig {
  double beta = 0.1;   // Sim_IM coefficient
  double theta = 0.1;  // Sim_DT coefficient
  double lr_backbone = 1e-4;
  double lr_rest = 5e-4;
  int epochs_stage1 = 30;
  int epochs_stage2 = 0;
  int batch_size = 8;
  uint64_t seed = 7;
  std::string rl_reward = "bleu4";
};

struct StepBreakdown {
  double l_t1 = 0, l_ce = 0, l_sim_im = 0, l_sim_dt = 0;
  int truncated = 0;
};

struct RlStepBreakdown {
  double l_rl = 0, l_ce = 0, reward_sampled = 0, reward_baseline = 0;
};

// Owns the optimizer and the training-time RNG; samples handed to the step
// functions must already be preprocessed and tokenized.
class Trainer {
 public:
  using RewardFn = std::function<double(const WordSeq& candidate, const WordSeq& reference)>;

  Trainer(ComgModel& model, const TrainConfig& cfg);

  // one composite-loss update: L = L_CE + beta*L_Sim_IM + theta*L_Sim_DT
  StepBreakdown stage1_step(const std::vector<const Sample*>& batch);

  // one self-critical update: sampled-vs-greedy advantage times the sampled
  // sequence log-probability, plus the teacher-forced CE (include_ce=false
  // detaches the CE term; used by the zero-advantage checks)
  RlStepBreakdown stage2_rl_step(const std::vector<const Sample*>& batch, bool include_ce = true);

  ComgModel& model() { return model_; }
  AdamOptimizer& optimizer() { return opt_; }
  Rng& rng() { return rng_; }
  const TrainConfig& config() const { return cfg_; }
  void set_reward_fn(RewardFn fn) { reward_ = std::move(fn); }

 private:
  ComgModel& model_;
  TrainConfig cfg_;
  AdamOptimizer opt_;
  Rng rng_;
  RewardFn reward_;
};

struct TrainResult {
  std::vector<std::string> epoch_lines;
  std::string final_checkpoint;
  std::string best_checkpoint;
  double best_val_bleu4 = 0;
  int best_epoch = -1;
  double epoch1_l_t1 = 0;        // first stage-1 epoch mean
  double final_stage1_l_t1 = 0;  // last stage-1 epoch mean
};

// Full two-stage run: splits the corpus 7:2:1, builds the vocabulary from the
// training reports, trains, logs one line per epoch (epochs.log, steps.log in
// run_dir) and keeps the best-validation checkpoint. Deterministic in
// (corpus bytes, configs). resume_path continues from a saved checkpoint;
// its stored config hash must match unless force_resume is set.
TrainResult run_training(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::string& run_dir, uint64_t config_hash,
                         const std::string& resume_path = "", bool force_resume = false);

// reward metric lookup ("bleu1".."bleu4")
Trainer::RewardFn reward_from_name(const std::string& name);

}  // namespace comg
