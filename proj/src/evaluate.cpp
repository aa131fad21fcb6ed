#include <fstream>
#include <stdexcept>

#include "comg/metrics.hpp"
#include "comg/model.hpp"

namespace comg {

MetricsReport evaluate_corpus(const ComgModel& model, const std::vector<Sample>& samples,
                              const GenerationConfig& gen, const DiseaseGraph& graph,
                              const std::string& detail_path) {
  if (samples.empty()) throw std::invalid_argument("evaluate_corpus: empty sample list");
  std::vector<WordSeq> candidates, references;
  std::vector<std::vector<std::string>> gt_labels;
  candidates.reserve(samples.size());
  for (const Sample& s : samples) {
    candidates.push_back(model.vocab().decode_words(model.generate_beam(s, gen)));
    references.push_back(tokenize_words(s.report));
    gt_labels.push_back(s.labels);
  }
  const MetricsReport report = compute_metrics(candidates, references, gt_labels, graph);
  if (!detail_path.empty()) {
    std::ofstream f(detail_path);
    if (!f) throw std::runtime_error("cannot write " + detail_path);
    for (size_t i = 0; i < samples.size(); ++i) {
      f << "sample " << i << " seed " << samples[i].seed << '\n';
      f << "  ref:  " << join_words(references[i]) << '\n';
      f << "  pred: " << join_words(candidates[i]) << '\n';
    }
  }
  return report;
}

}  // namespace comg
