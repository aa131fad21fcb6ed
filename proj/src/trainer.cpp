#include "comg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "comg/checkpoint.hpp"
#include "comg/ops.hpp"

namespace fs = std::filesystem;

namespace comg {

namespace {

[[noreturn]] void abort_non_finite(const char* what, const ComgModel& model) {
  // name the largest-norm parameters to make the blow-up findable
  std::vector<std::pair<double, std::string>> norms;
  for (const auto& [name, t] : model.registry().all()) {
    double n2 = 0.0;
    for (double v : t.data()) n2 += v * v;
    norms.emplace_back(std::sqrt(n2), name);
  }
  std::sort(norms.rbegin(), norms.rend());
  std::ostringstream os;
  os << what << " is non-finite; largest parameter norms:";
  for (size_t i = 0; i < norms.size() && i < 3; ++i)
    os << ' ' << norms[i].second << "=" << norms[i].first;
  throw std::runtime_error(os.str());
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

std::string format_line(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

Trainer::RewardFn reward_from_name(const std::string& name) {
  for (int n = 1; n <= 4; ++n)
    if (name == "bleu" + std::to_string(n))
      return [n](const WordSeq& cand, const WordSeq& ref) { return sentence_bleu(cand, ref, n); };
  throw std::invalid_argument("unknown RL reward metric: " + name);
}

Trainer::Trainer(ComgModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_(model.registry().all(), cfg.lr_rest, {{"backbone.", cfg.lr_backbone}}),
      rng_(cfg.seed),
      reward_(reward_from_name(cfg.rl_reward)) {
  if (cfg.beta < 0 || cfg.theta < 0) throw std::invalid_argument("loss coefficients must be >= 0");
  if (cfg.lr_backbone <= 0 || cfg.lr_rest <= 0) throw std::invalid_argument("learning rates must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

StepBreakdown Trainer::stage1_step(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("stage1_step: empty batch");
  opt_.zero_grad();
  std::vector<Tensor> ces, ims, dts;
  StepBreakdown out;
  for (const Sample* s : batch) {
    const auto fr = model_.forward_train(*s);
    ces.push_back(fr.ce);
    ims.push_back(fr.sim_im);
    dts.push_back(fr.sim_dt);
    if (fr.truncated) ++out.truncated;
  }
  Tensor ce = mean_of(ces);
  Tensor im = mean_of(ims);
  Tensor dt = mean_of(dts);
  // zero coefficients leave the consistency terms out of the graph entirely
  Tensor total = ce;
  if (cfg_.beta != 0.0) total = add(total, scale(im, cfg_.beta));
  if (cfg_.theta != 0.0) total = add(total, scale(dt, cfg_.theta));
  out.l_t1 = total.item();
  out.l_ce = ce.item();
  out.l_sim_im = im.item();
  out.l_sim_dt = dt.item();
  if (!std::isfinite(out.l_t1) || !std::isfinite(out.l_sim_im) || !std::isfinite(out.l_sim_dt))
    abort_non_finite("stage-1 loss", model_);
  total.backward();
  opt_.step();
  return out;
}

RlStepBreakdown Trainer::stage2_rl_step(const std::vector<const Sample*>& batch, bool include_ce) {
  if (batch.empty()) throw std::invalid_argument("stage2_rl_step: empty batch");
  opt_.zero_grad();
  GenerationConfig decode_cfg;
  decode_cfg.max_len = model_.config().max_len;
  std::vector<Tensor> rl_terms, ce_terms;
  RlStepBreakdown out;
  for (const Sample* s : batch) {
    Tensor memory = model_.build_memory(*s);
    DecodeResult greedy, sampled;
    {
      NoGradGuard ng;
      greedy = greedy_decode_full(memory, model_.generator, decode_cfg);
      sampled = sample_decode(memory, model_.generator, decode_cfg, rng_);
    }
    const WordSeq ref = tokenize_words(s->report);
    const double r_b = reward_(model_.vocab().decode_words(greedy.body), ref);
    const double r_s = reward_(model_.vocab().decode_words(sampled.body), ref);
    const double advantage = r_s - r_b;
    rl_terms.push_back(scale(model_.body_log_prob(memory, sampled.body, sampled.ended), -advantage));
    if (include_ce) ce_terms.push_back(model_.report_cross_entropy(memory, *s));
    out.reward_sampled += r_s;
    out.reward_baseline += r_b;
  }
  Tensor rl = mean_of(rl_terms);
  Tensor total = rl;
  if (include_ce) {
    Tensor ce = mean_of(ce_terms);
    total = add(rl, ce);
    out.l_ce = ce.item();
  }
  out.l_rl = rl.item();
  out.reward_sampled /= static_cast<double>(batch.size());
  out.reward_baseline /= static_cast<double>(batch.size());
  if (!std::isfinite(out.l_rl) || !std::isfinite(out.l_ce)) abort_non_finite("stage-2 loss", model_);
  total.backward();
  opt_.step();
  return out;
}

TrainResult run_training(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::string& run_dir, uint64_t config_hash,
                         const std::string& resume_path, bool force_resume) {
  const int n = static_cast<int>(corpus.samples.size());
  const SplitIndices split = split_7_2_1(n);
  if (split.train.empty() || split.test.empty() || split.val.empty())
    throw std::invalid_argument("corpus of " + std::to_string(n) + " samples yields an empty split");

  std::vector<std::string> train_reports;
  for (int i : split.train) train_reports.push_back(corpus.samples[static_cast<size_t>(i)].report);
  const Vocabulary vocab = Vocabulary::build(train_reports, /*min_count=*/3);
  const DiseaseGraph graph = build_disease_graph();

  ComgModel model(mcfg, vocab, graph);
  Trainer trainer(model, tcfg);

  // tokenized working copies; eval sets get the deterministic preprocessing
  std::vector<Sample> train_samples, val_samples;
  for (int i : split.train) {
    Sample s = corpus.samples[static_cast<size_t>(i)];
    s.report_ids = vocab.encode(s.report);
    train_samples.push_back(std::move(s));
  }
  Rng eval_rng(0);
  for (int i : split.val) {
    Sample s = preprocess(corpus.samples[static_cast<size_t>(i)], /*train_mode=*/false, eval_rng);
    s.report_ids = vocab.encode(s.report);
    val_samples.push_back(std::move(s));
  }

  uint32_t start_epoch = 0;
  if (!resume_path.empty()) {
    const CheckpointData ck = read_checkpoint(resume_path);
    if (ck.config_hash != config_hash && !force_resume)
      throw std::runtime_error("checkpoint config hash mismatch (stored " + std::to_string(ck.config_hash) +
                               ", current " + std::to_string(config_hash) + "); use force to override");
    apply_checkpoint(ck, model);
    if (ck.optimizer) trainer.optimizer().restore(*ck.optimizer);
    trainer.rng().set_state(ck.rng_state);
    start_epoch = ck.epoch;
  }

  fs::create_directories(run_dir);
  std::ofstream epochs_log(fs::path(run_dir) / "epochs.log", std::ios::app);
  std::ofstream steps_log(fs::path(run_dir) / "steps.log", std::ios::app);

  GenerationConfig val_gen;
  val_gen.max_len = mcfg.max_len;

  auto val_bleu4 = [&]() {
    NoGradGuard ng;
    std::vector<WordSeq> cands, refs;
    for (const Sample& s : val_samples) {
      cands.push_back(vocab.decode_words(greedy_decode(model.build_memory(s), model.generator, val_gen)));
      refs.push_back(tokenize_words(s.report));
    }
    return bleu_n(cands, refs, 4);
  };

  TrainResult result;
  const int total_epochs = tcfg.epochs_stage1 + tcfg.epochs_stage2;
  const std::string final_path = (fs::path(run_dir) / "final.ckpt").string();
  const std::string best_path = (fs::path(run_dir) / "best.ckpt").string();

  for (int epoch = static_cast<int>(start_epoch); epoch < total_epochs; ++epoch) {
    const bool rl_stage = epoch >= tcfg.epochs_stage1;
    // order derives from the identity each epoch so a resumed run shuffles
    // exactly like the uninterrupted one
    std::vector<int> order(train_samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    trainer.rng().shuffle(order);
    double sum_a = 0, sum_b = 0, sum_c = 0, sum_d = 0;
    int steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(tcfg.batch_size)) {
      std::vector<Sample> holder;
      holder.reserve(static_cast<size_t>(tcfg.batch_size));
      for (size_t j = at; j < order.size() && j < at + static_cast<size_t>(tcfg.batch_size); ++j)
        holder.push_back(preprocess(train_samples[static_cast<size_t>(order[j])], /*train_mode=*/true,
                                    trainer.rng()));
      std::vector<const Sample*> batch;
      for (const Sample& s : holder) batch.push_back(&s);
      if (!rl_stage) {
        const StepBreakdown b = trainer.stage1_step(batch);
        steps_log << format_line("epoch %d step %d stage 1 l_t1 %.9f l_ce %.9f l_sim_im %.9f l_sim_dt %.9f",
                                 epoch + 1, steps + 1, b.l_t1, b.l_ce, b.l_sim_im, b.l_sim_dt)
                  << '\n';
        sum_a += b.l_t1; sum_b += b.l_ce; sum_c += b.l_sim_im; sum_d += b.l_sim_dt;
      } else {
        const RlStepBreakdown b = trainer.stage2_rl_step(batch);
        steps_log << format_line(
                         "epoch %d step %d stage 2 l_rl %.9f l_ce %.9f reward_sampled %.9f reward_baseline %.9f",
                         epoch + 1, steps + 1, b.l_rl, b.l_ce, b.reward_sampled, b.reward_baseline)
                  << '\n';
        sum_a += b.l_rl; sum_b += b.l_ce; sum_c += b.reward_sampled; sum_d += b.reward_baseline;
      }
      ++steps;
    }
    const double bleu4 = val_bleu4();
    std::string line;
    if (!rl_stage) {
      line = format_line("epoch %d stage 1 l_t1 %.9f l_ce %.9f l_sim_im %.9f l_sim_dt %.9f val_bleu4 %.9f",
                         epoch + 1, sum_a / steps, sum_b / steps, sum_c / steps, sum_d / steps, bleu4);
      if (epoch == 0) result.epoch1_l_t1 = sum_a / steps;
      result.final_stage1_l_t1 = sum_a / steps;
    } else {
      line = format_line(
          "epoch %d stage 2 l_rl %.9f l_ce %.9f reward_sampled %.9f reward_baseline %.9f val_bleu4 %.9f",
          epoch + 1, sum_a / steps, sum_b / steps, sum_c / steps, sum_d / steps, bleu4);
    }
    epochs_log << line << '\n';
    epochs_log.flush();
    result.epoch_lines.push_back(line);
    if (bleu4 > result.best_val_bleu4 || result.best_epoch < 0) {
      result.best_val_bleu4 = bleu4;
      result.best_epoch = epoch + 1;
      save_checkpoint(best_path, model, &trainer.optimizer(), static_cast<uint32_t>(epoch + 1),
                      trainer.rng().state(), config_hash);
    }
    save_checkpoint(final_path, model, &trainer.optimizer(), static_cast<uint32_t>(epoch + 1),
                    trainer.rng().state(), config_hash);
  }
  if (total_epochs <= static_cast<int>(start_epoch)) {
    // zero-epoch run still produces a loadable checkpoint of the initialization
    save_checkpoint(final_path, model, &trainer.optimizer(), start_epoch, trainer.rng().state(), config_hash);
    save_checkpoint(best_path, model, &trainer.optimizer(), start_epoch, trainer.rng().state(), config_hash);
  }
  result.final_checkpoint = final_path;
  result.best_checkpoint = best_path;
  return result;
}

}  // namespace comg
