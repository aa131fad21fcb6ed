#include "comg/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "comg/checkpoint.hpp"
#include "comg/config.hpp"
#include "comg/metrics.hpp"
#include "comg/trainer.hpp"

namespace fs = std::filesystem;

namespace comg {

namespace {

std::string default_run_name(uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_buf{};
  localtime_r(&t, &tm_buf);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_buf);
  return std::string(buf) + "-seed" + std::to_string(seed);
}

std::string make_run_dir(const std::string& out, const std::string& run_name, uint64_t seed) {
  const std::string leaf = run_name.empty() ? default_run_name(seed) : run_name;
  const fs::path dir = fs::path(out) / leaf;
  fs::create_directories(dir);
  return dir.string();
}

void echo_config(const RunConfig& cfg, const std::string& run_dir) {
  std::ofstream f(fs::path(run_dir) / "config_echo.ini");
  f << run_config_text(cfg);
}

Sample load_raw_sample(const std::string& image_path, const std::array<std::string, kNumOrgans>& mask_paths) {
  Sample s;
  s.image = read_grid(image_path);
  for (Organ og : kOrgans) {
    Grid m = read_grid(mask_paths[static_cast<size_t>(og)]);
    if (!grid_is_binary(m))
      throw std::runtime_error("mask for " + organ_name(og) + " is not binary");
    s.masks[static_cast<size_t>(og)] = std::move(m);
  }
  return s;
}

std::vector<Sample> pick_split(const Corpus& corpus, const std::string& split_name) {
  const SplitIndices split = split_7_2_1(static_cast<int>(corpus.samples.size()));
  const std::vector<int>* idx = nullptr;
  if (split_name == "train") idx = &split.train;
  else if (split_name == "test") idx = &split.test;
  else if (split_name == "val") idx = &split.val;
  else throw std::runtime_error("unknown split '" + split_name + "' (expected train, test or val)");
  Rng eval_rng(0);
  std::vector<Sample> out;
  for (int i : *idx)
    out.push_back(preprocess(corpus.samples[static_cast<size_t>(i)], /*train_mode=*/false, eval_rng));
  return out;
}

std::vector<double> parse_grid_values(const std::string& csv) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::runtime_error("empty coefficient list '" + csv + "'");
  return out;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

int cmd_generate_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
  write_corpus(out_dir, cfg, build_disease_graph());
  std::cout << "wrote " << cfg.n << " samples (" << cfg.height << "x" << cfg.width << ", p_disease "
            << cfg.p_disease << ") to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_dir, const std::string& run_dir,
              const std::string& resume, bool force) {
  echo_config(cfg, run_dir);
  const Corpus corpus = load_corpus(corpus_dir);
  const TrainResult r =
      run_training(corpus, cfg.model, cfg.train, run_dir, run_config_hash(cfg), resume, force);
  for (const auto& line : r.epoch_lines) std::cout << line << "\n";
  std::cout << "final checkpoint: " << r.final_checkpoint << "\n";
  std::cout << "best checkpoint:  " << r.best_checkpoint << " (epoch " << r.best_epoch << ", val BLEU@4 "
            << fmt3(r.best_val_bleu4) << ")\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint, const std::string& corpus_dir,
                 const std::string& split, const std::string& run_dir) {
  echo_config(cfg, run_dir);
  const CheckpointData ck = read_checkpoint(checkpoint);
  const DiseaseGraph graph = build_disease_graph();
  auto model = model_from_checkpoint(ck, graph);
  const Corpus corpus = load_corpus(corpus_dir);
  const std::vector<Sample> samples = pick_split(corpus, split);
  const MetricsReport report = evaluate_corpus(*model, samples, cfg.generation, graph,
                                               (fs::path(run_dir) / "details.txt").string());
  const std::string text = metrics_to_text(report);
  std::ofstream f(fs::path(run_dir) / "metrics.txt");
  f << text;
  std::cout << text;
  return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::string& corpus_dir,
                 int index, const std::string& image_path,
                 const std::array<std::string, kNumOrgans>& mask_paths, const std::string& out_file) {
  const CheckpointData ck = read_checkpoint(checkpoint);
  const DiseaseGraph graph = build_disease_graph();
  auto model = model_from_checkpoint(ck, graph);
  Sample raw;
  if (!corpus_dir.empty()) {
    const Corpus corpus = load_corpus(corpus_dir);
    if (index < 0 || index >= static_cast<int>(corpus.samples.size()))
      throw std::runtime_error("sample index " + std::to_string(index) + " out of corpus of " +
                               std::to_string(corpus.samples.size()));
    raw = corpus.samples[static_cast<size_t>(index)];
  } else {
    raw = load_raw_sample(image_path, mask_paths);
  }
  Rng eval_rng(0);
  const Sample s = preprocess(raw, /*train_mode=*/false, eval_rng);
  const std::string report = join_words(model->generate_words(s, cfg.generation));
  std::cout << report << "\n";
  if (!out_file.empty()) {
    std::ofstream f(out_file);
    f << report << "\n";
  }
  return 0;
}

int cmd_ablate(const RunConfig& base, const std::string& corpus_dir, const std::string& run_dir,
               const std::vector<double>& betas, const std::vector<double>& thetas) {
  echo_config(base, run_dir);
  const Corpus corpus = load_corpus(corpus_dir);
  const DiseaseGraph graph = build_disease_graph();

  struct Cell {
    double beta, theta;
    MetricsReport report;
  };
  std::vector<Cell> cells;
  for (double beta : betas)
    for (double theta : thetas) {
      RunConfig cfg = base;
      cfg.train.beta = beta;
      cfg.train.theta = theta;
      std::ostringstream leaf;
      leaf << "beta" << beta << "_theta" << theta;
      const std::string cell_dir = (fs::path(run_dir) / leaf.str()).string();
      fs::create_directories(cell_dir);
      echo_config(cfg, cell_dir);
      const TrainResult tr = run_training(corpus, cfg.model, cfg.train, cell_dir, run_config_hash(cfg));
      const CheckpointData ck = read_checkpoint(tr.best_checkpoint);
      auto model = model_from_checkpoint(ck, graph);
      const std::vector<Sample> test = pick_split(corpus, "test");
      cells.push_back({beta, theta, evaluate_corpus(*model, test, cfg.generation, graph)});
      std::cout << "done beta=" << beta << " theta=" << theta << "\n";
    }

  std::ostringstream md;
  md << "| metric |";
  for (const Cell& c : cells) md << " b=" << c.beta << " t=" << c.theta << " |";
  md << "\n|---|";
  for (size_t i = 0; i < cells.size(); ++i) md << "---|";
  md << "\n";
  const char* row_names[] = {"B@1", "B@2", "B@3", "B@4", "MET.", "RGL."};
  for (int row = 0; row < 6; ++row) {
    md << "| " << row_names[row] << " |";
    for (const Cell& c : cells) {
      double v = 0;
      if (row < 4) v = c.report.bleu[row];
      else if (row == 4) v = c.report.meteor;
      else v = c.report.rouge_l;
      md << ' ' << fmt3(v) << " |";
    }
    md << "\n";
  }
  std::ofstream f(fs::path(run_dir) / "ablation.md");
  f << md.str();
  std::cout << md.str();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"mask-guided radiology report generation on a synthetic corpus"};
  app.require_subcommand(1);

  // generate-corpus
  auto* gen_corpus = app.add_subcommand("generate-corpus", "generate a synthetic image/mask/report corpus");
  CorpusConfig ccfg;
  std::string gc_out;
  gen_corpus->add_option("--n", ccfg.n, "number of samples");
  gen_corpus->add_option("--H", ccfg.height, "image height");
  gen_corpus->add_option("--W", ccfg.width, "image width");
  gen_corpus->add_option("--p-disease", ccfg.p_disease, "per-organ disease probability");
  gen_corpus->add_option("--seed", ccfg.seed, "base seed");
  gen_corpus->add_option("--lesion-delta", ccfg.lesion_delta, "lesion brightness shift");
  gen_corpus->add_option("--out", gc_out, "output directory")->required();

  // shared config/flag plumbing for train/evaluate/generate/ablate
  std::string config_path, corpus_dir, out_dir, run_name, checkpoint, resume, split = "test";
  bool force = false;
  double beta_flag = 0, theta_flag = 0;
  int epochs1_flag = 0, epochs2_flag = 0, batch_flag = 0, beam_flag = 0, index_flag = -1;
  uint64_t seed_flag = 0;
  std::string image_path, out_file, betas_csv = "0.1,1", thetas_csv = "0.1,1";
  std::array<std::string, kNumOrgans> mask_paths;

  auto* train = app.add_subcommand("train", "two-stage training on a corpus");
  train->add_option("--config", config_path, "run configuration file");
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--out", out_dir, "output root")->required();
  train->add_option("--run-name", run_name, "run directory name (default: timestamp-seed)");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_flag("--force", force, "resume despite a config hash mismatch");
  auto* tr_beta = train->add_option("--beta", beta_flag, "Sim_IM coefficient override");
  auto* tr_theta = train->add_option("--theta", theta_flag, "Sim_DT coefficient override");
  auto* tr_e1 = train->add_option("--epochs-stage1", epochs1_flag, "stage-1 epochs override");
  auto* tr_e2 = train->add_option("--epochs-stage2", epochs2_flag, "stage-2 epochs override");
  auto* tr_bs = train->add_option("--batch-size", batch_flag, "batch size override");
  auto* tr_seed = train->add_option("--seed", seed_flag, "training seed override");

  auto* evaluate = app.add_subcommand("evaluate", "decode a split and score it");
  evaluate->add_option("--config", config_path, "run configuration file");
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evaluate->add_option("--corpus", corpus_dir, "corpus directory")->required();
  evaluate->add_option("--split", split, "train, test or val");
  evaluate->add_option("--out", out_dir, "output root")->required();
  evaluate->add_option("--run-name", run_name, "run directory name");
  auto* ev_beam = evaluate->add_option("--beam-width", beam_flag, "beam width override");

  auto* generate = app.add_subcommand("generate", "generate a report for one image");
  generate->add_option("--config", config_path, "run configuration file");
  generate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  generate->add_option("--corpus", corpus_dir, "corpus directory (with --index)");
  generate->add_option("--index", index_flag, "sample index within the corpus");
  generate->add_option("--image", image_path, "raw image grid file");
  generate->add_option("--mask-bone", mask_paths[0], "bone mask grid file");
  generate->add_option("--mask-lung", mask_paths[1], "lung mask grid file");
  generate->add_option("--mask-heart", mask_paths[2], "heart mask grid file");
  generate->add_option("--mask-mediastinum", mask_paths[3], "mediastinum mask grid file");
  generate->add_option("--out", out_file, "also write the report to this file");
  auto* gn_beam = generate->add_option("--beam-width", beam_flag, "beam width override");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate a grid of loss coefficients");
  ablate->add_option("--config", config_path, "run configuration file");
  ablate->add_option("--corpus", corpus_dir, "corpus directory")->required();
  ablate->add_option("--out", out_dir, "output root")->required();
  ablate->add_option("--run-name", run_name, "run directory name");
  ablate->add_option("--betas", betas_csv, "comma-separated Sim_IM coefficients");
  ablate->add_option("--thetas", thetas_csv, "comma-separated Sim_DT coefficients");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_corpus->parsed()) return cmd_generate_corpus(ccfg, gc_out);

    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (tr_beta && tr_beta->count()) cfg.train.beta = beta_flag;
    if (tr_theta && tr_theta->count()) cfg.train.theta = theta_flag;
    if (tr_e1 && tr_e1->count()) cfg.train.epochs_stage1 = epochs1_flag;
    if (tr_e2 && tr_e2->count()) cfg.train.epochs_stage2 = epochs2_flag;
    if (tr_bs && tr_bs->count()) cfg.train.batch_size = batch_flag;
    if (tr_seed && tr_seed->count()) cfg.train.seed = seed_flag;
    if ((ev_beam && ev_beam->count()) || (gn_beam && gn_beam->count())) cfg.generation.beam_width = beam_flag;

    if (train->parsed()) {
      const std::string run_dir = make_run_dir(out_dir, run_name, cfg.train.seed);
      return cmd_train(cfg, corpus_dir, run_dir, resume, force);
    }
    if (evaluate->parsed()) {
      const std::string run_dir = make_run_dir(out_dir, run_name, cfg.train.seed);
      return cmd_evaluate(cfg, checkpoint, corpus_dir, split, run_dir);
    }
    if (generate->parsed()) {
      if (corpus_dir.empty() && image_path.empty())
        throw std::runtime_error("generate needs either --corpus/--index or --image plus the four masks");
      return cmd_generate(cfg, checkpoint, corpus_dir, index_flag, image_path, mask_paths, out_file);
    }
    if (ablate->parsed()) {
      const std::string run_dir = make_run_dir(out_dir, run_name, cfg.train.seed);
      return cmd_ablate(cfg, corpus_dir, run_dir, parse_grid_values(betas_csv), parse_grid_values(thetas_csv));
    }
    throw std::runtime_error("no subcommand given");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace comg
