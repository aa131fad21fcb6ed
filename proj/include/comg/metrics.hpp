#pragma once

#include <string>
#include <vector>

#include "comg/corpus.hpp"

namespace comg {

using WordSeq = std::vector<std::string>;

// Corpus-level BLEU@n: geometric mean of clipped k-gram precisions (k=1..n)
// times the brevity penalty. A k with candidate k-grams but zero matches gets
// an add-epsilon (1e-9) numerator; an empty candidate corpus scores 0.
double bleu_n(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references, int n);
// same formula on a single pair (used as the RL reward)
double sentence_bleu(const WordSeq& candidate, const WordSeq& reference, int n);

// mean over pairs of the LCS F-score (beta = 1)
double rouge_l(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references);

// exact-unigram METEOR: F = 10PR/(R+9P), fragmentation penalty
// 0.5*(chunks/matches)^3; no stemming or synonym matching
double meteor_simplified(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references);

struct CeScores {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

// micro-averaged keyword precision/recall/F1; predicted labels are extracted
// from each predicted report with the negation-aware keyword matcher
CeScores ce_metrics(const std::vector<WordSeq>& predicted_reports,
                    const std::vector<std::vector<std::string>>& gt_label_sets,
                    const DiseaseGraph& graph);

struct MetricsReport {
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0.0;
  double meteor = 0.0;
  double ce_precision = 0.0, ce_recall = 0.0, ce_f1 = 0.0;
  int n_samples = 0;
};

MetricsReport compute_metrics(const std::vector<WordSeq>& candidates,
                              const std::vector<WordSeq>& references,
                              const std::vector<std::vector<std::string>>& gt_label_sets,
                              const DiseaseGraph& graph);

// stable key order, fixed precision; used for golden-file comparisons
std::string metrics_to_text(const MetricsReport& r);

class ComgModel;
struct GenerationConfig;

// Beam-decodes every sample, scores against the ground-truth reports and
// labels. detail_path, when nonempty, receives one line per sample.
MetricsReport evaluate_corpus(const ComgModel& model, const std::vector<Sample>& samples,
                              const GenerationConfig& gen, const DiseaseGraph& graph,
                              const std::string& detail_path = "");

}  // namespace comg
