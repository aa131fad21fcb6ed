#include "comg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace comg {

namespace {

constexpr double kBleuEps = 1e-9;

void check_paired(const char* op, size_t a, size_t b) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(a) + " candidates vs " +
                                std::to_string(b) + " references");
  if (a == 0) throw std::invalid_argument(std::string(op) + ": empty corpus");
}

std::map<std::vector<std::string>, int> ngram_counts(const WordSeq& words, int k) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(words.size()) < k) return counts;
  for (size_t i = 0; i + static_cast<size_t>(k) <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + static_cast<long>(i),
                                      words.begin() + static_cast<long>(i) + k)];
  return counts;
}

struct BleuCounts {
  std::vector<long> matches, total;  // per k
  long cand_len = 0, ref_len = 0;
};

BleuCounts accumulate_bleu(const std::vector<WordSeq>& cands, const std::vector<WordSeq>& refs, int n) {
  BleuCounts bc;
  bc.matches.assign(static_cast<size_t>(n), 0);
  bc.total.assign(static_cast<size_t>(n), 0);
  for (size_t i = 0; i < cands.size(); ++i) {
    bc.cand_len += static_cast<long>(cands[i].size());
    bc.ref_len += static_cast<long>(refs[i].size());
    for (int k = 1; k <= n; ++k) {
      const auto cc = ngram_counts(cands[i], k);
      const auto rc = ngram_counts(refs[i], k);
      long total = 0, matched = 0;
      for (const auto& [gram, c] : cc) {
        total += c;
        auto it = rc.find(gram);
        if (it != rc.end()) matched += std::min(c, it->second);
      }
      bc.matches[static_cast<size_t>(k - 1)] += matched;
      bc.total[static_cast<size_t>(k - 1)] += total;
    }
  }
  return bc;
}

double bleu_from_counts(const BleuCounts& bc, int n) {
  if (bc.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const long total = bc.total[static_cast<size_t>(k - 1)];
    const long matched = bc.matches[static_cast<size_t>(k - 1)];
    double pk;
    if (total == 0)
      pk = kBleuEps;
    else if (matched == 0)
      pk = kBleuEps / static_cast<double>(total);
    else
      pk = static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(pk);
  }
  const double bp = bc.cand_len >= bc.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(bc.ref_len) / static_cast<double>(bc.cand_len));
  return bp * std::exp(log_sum / n);
}

}  // namespace

double bleu_n(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references, int n) {
  check_paired("bleu_n", candidates.size(), references.size());
  if (n < 1) throw std::invalid_argument("bleu_n: n must be >= 1");
  return bleu_from_counts(accumulate_bleu(candidates, references, n), n);
}

double sentence_bleu(const WordSeq& candidate, const WordSeq& reference, int n) {
  return bleu_n({candidate}, {reference}, n);
}

namespace {
int lcs_length(const WordSeq& a, const WordSeq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[m];
}
}  // namespace

double rouge_l(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references) {
  check_paired("rouge_l", candidates.size(), references.size());
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const int lcs = lcs_length(candidates[i], references[i]);
    if (lcs == 0 || candidates[i].empty() || references[i].empty()) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(candidates[i].size());
    const double r = static_cast<double>(lcs) / static_cast<double>(references[i].size());
    total += 2.0 * p * r / (p + r);
  }
  return total / static_cast<double>(candidates.size());
}

double meteor_simplified(const std::vector<WordSeq>& candidates, const std::vector<WordSeq>& references) {
  check_paired("meteor_simplified", candidates.size(), references.size());
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const WordSeq& cand = candidates[i];
    const WordSeq& ref = references[i];
    // greedy left-to-right alignment to the earliest unmatched reference slot
    std::vector<int> align(cand.size(), -1);
    std::vector<bool> used(ref.size(), false);
    int matches = 0;
    for (size_t c = 0; c < cand.size(); ++c)
      for (size_t r = 0; r < ref.size(); ++r)
        if (!used[r] && cand[c] == ref[r]) {
          align[c] = static_cast<int>(r);
          used[r] = true;
          ++matches;
          break;
        }
    if (matches == 0 || cand.empty() || ref.empty()) continue;
    int chunks = 0;
    int prev_ref = -2;
    for (size_t c = 0; c < cand.size(); ++c) {
      if (align[c] < 0) {
        prev_ref = -2;
        continue;
      }
      if (align[c] != prev_ref + 1) ++chunks;
      prev_ref = align[c];
    }
    const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double f = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    total += f * (1.0 - penalty);
  }
  return total / static_cast<double>(candidates.size());
}

CeScores ce_metrics(const std::vector<WordSeq>& predicted_reports,
                    const std::vector<std::vector<std::string>>& gt_label_sets,
                    const DiseaseGraph& graph) {
  check_paired("ce_metrics", predicted_reports.size(), gt_label_sets.size());
  CeScores s;
  for (size_t i = 0; i < predicted_reports.size(); ++i) {
    const auto pred_list = extract_disease_keywords(predicted_reports[i], graph);
    const std::set<std::string> pred(pred_list.begin(), pred_list.end());
    const std::set<std::string> gt(gt_label_sets[i].begin(), gt_label_sets[i].end());
    for (const auto& k : pred) {
      if (gt.count(k)) ++s.tp; else ++s.fp;
    }
    for (const auto& k : gt)
      if (!pred.count(k)) ++s.fn;
  }
  s.precision = (s.tp + s.fp) > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp) : 0.0;
  s.recall = (s.tp + s.fn) > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : 0.0;
  s.f1 = (s.precision > 0.0 && s.recall > 0.0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

MetricsReport compute_metrics(const std::vector<WordSeq>& candidates,
                              const std::vector<WordSeq>& references,
                              const std::vector<std::vector<std::string>>& gt_label_sets,
                              const DiseaseGraph& graph) {
  MetricsReport r;
  r.n_samples = static_cast<int>(candidates.size());
  for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu_n(candidates, references, n);
  r.rouge_l = rouge_l(candidates, references);
  r.meteor = meteor_simplified(candidates, references);
  const CeScores ce = ce_metrics(candidates, gt_label_sets, graph);
  r.ce_precision = ce.precision;
  r.ce_recall = ce.recall;
  r.ce_f1 = ce.f1;
  return r;
}

std::string metrics_to_text(const MetricsReport& r) {
  std::ostringstream os;
  char buf[64];
  os << "n_samples " << r.n_samples << '\n';
  const std::pair<const char*, double> rows[] = {
      {"bleu1", r.bleu[0]},   {"bleu2", r.bleu[1]}, {"bleu3", r.bleu[2]},
      {"bleu4", r.bleu[3]},   {"rouge_l", r.rouge_l}, {"meteor", r.meteor},
      {"ce_precision", r.ce_precision}, {"ce_recall", r.ce_recall}, {"ce_f1", r.ce_f1},
  };
  for (const auto& [key, val] : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", val);
    os << key << ' ' << buf << '\n';
  }
  return os.str();
}

}  // namespace comg
