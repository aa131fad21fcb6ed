#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comg/rng.hpp"

namespace comg {

enum class Organ : int { Bone = 0, Lung = 1, Heart = 2, Mediastinum = 3 };
inline constexpr std::array<Organ, 4> kOrgans{Organ::Bone, Organ::Lung, Organ::Heart, Organ::Mediastinum};
inline constexpr int kNumOrgans = 4;
std::string organ_name(Organ og);
Organ organ_from_name(const std::string& name);

struct DiseaseEntry {
  std::string keyword;        // appears verbatim in diseased reports
  std::string prior_caption;  // fixed descriptive phrase, independent of any sample
};

struct DiseaseGraph {
  std::array<std::vector<DiseaseEntry>, kNumOrgans> entries;

  const std::vector<DiseaseEntry>& diseases(Organ og) const {
    return entries[static_cast<size_t>(og)];
  }
  std::optional<Organ> organ_of(const std::string& keyword) const;
  std::vector<std::string> all_keywords() const;  // organ order, then list order
};

// The fixed 4-organ disease graph used throughout the project.
DiseaseGraph build_disease_graph();

struct CorpusConfig {
  int n = 300;
  int height = 32;
  int width = 32;
  double p_disease = 0.5;
  uint64_t seed = 1234;
  double lesion_delta = 0.3;      // brightness shift inside the lesion
  double lesion_area_frac = 0.2;  // lesion area as fraction of the organ area
  int max_report_len = 48;        // tokens incl. begin/end markers
};

struct Grid {
  int h = 0, w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  bool operator==(const Grid&) const = default;
};

bool grid_is_binary(const Grid& g);
Grid resize_mask_nearest(const Grid& mask, int out_h, int out_w);

// Per-organ geometry plus disease draws; seed fully determines the scene.
struct SyntheticScene {
  uint64_t rng_seed = 0;
  // disease index into graph.diseases(og), or -1 when healthy
  std::array<int, kNumOrgans> disease = {-1, -1, -1, -1};
  // geometry jitter in normalized units, drawn once per scene
  double heart_cx = 0, heart_cy = 0, heart_rx = 0, heart_ry = 0;
  double lung_cy = 0, lung_rx = 0, lung_ry = 0, lung_lx = 0, lung_rxc = 0;
  int rib_count = 0;
  double rib_phase = 0, rib_thickness = 0;
  double med_cx = 0, med_halfw = 0;
};

struct Sample {
  Grid image;                       // values in [0,1] as generated
  std::array<Grid, kNumOrgans> masks;  // binary {0,1}
  std::string report;               // lowercase words, no punctuation
  std::vector<int> report_ids;      // begin ... end, filled once a vocabulary exists
  std::vector<std::string> labels;  // disease keywords, graph order
  uint64_t seed = 0;
};

SyntheticScene make_scene(uint64_t seed, const CorpusConfig& cfg, const DiseaseGraph& graph);
// render with the scene's disease flags, or all-healthy when healthy_override
Sample render_scene(const SyntheticScene& scene, const CorpusConfig& cfg, const DiseaseGraph& graph,
                    bool healthy_override = false);
Sample generate_sample(uint64_t seed, const CorpusConfig& cfg, const DiseaseGraph& graph);
Sample generate_sample(uint64_t seed, const CorpusConfig& cfg);

// lowercase, strip punctuation, split on whitespace
std::vector<std::string> tokenize_words(const std::string& text);
std::string join_words(const std::vector<std::string>& words);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBegin = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;

  // tokens below min_count encode to <unk>; ids ordered by (count desc, token asc)
  static Vocabulary build(const std::vector<std::string>& reports, int min_count = 3);
  static Vocabulary from_tokens(const std::vector<std::string>& non_reserved_tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::vector<int> encode(const std::string& text, bool add_markers = true) const;
  std::vector<int> encode_words(const std::vector<std::string>& words, bool add_markers = true) const;
  // body words only: pad/begin/end dropped, unk rendered as <unk>
  std::vector<std::string> decode_words(const std::vector<int>& ids) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  Vocabulary();
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
};

struct PreprocessConfig {
  int crop_pad = 2;        // zero-pad then crop back to H x W at a random offset
  double flip_prob = 0.5;  // horizontal flip, image and masks jointly
};

// Normalizes the image to zero mean / unit variance. In train mode a random
// shifted crop and horizontal flip are applied identically to image and masks.
Sample preprocess(const Sample& s, bool train_mode, Rng& rng, const PreprocessConfig& cfg = {});

// All graph keywords present in `words` and not preceded within
// `negation_window` tokens by "no", "without" or "free of".
std::vector<std::string> extract_disease_keywords(const std::vector<std::string>& words,
                                                  const DiseaseGraph& graph, int negation_window = 3);

// ---- corpus persistence ------------------------------------------------
// directory layout: meta.json, manifest.jsonl, samples/NNNNNN.*.bin
// grid files: 16-byte header (magic 'CGRD', dtype u32, H u32, W u32, LE)

inline constexpr uint32_t kGridMagic = 0x44524743;  // "CGRD"
inline constexpr uint32_t kGridDtypeF64 = 1;
inline constexpr uint32_t kGridDtypeU8 = 2;

void write_grid(const std::string& path, const Grid& g, uint32_t dtype);
Grid read_grid(const std::string& path);

struct Corpus {
  CorpusConfig cfg;
  std::vector<Sample> samples;  // report_ids left empty until tokenized
};

void write_corpus(const std::string& dir, const CorpusConfig& cfg, const DiseaseGraph& graph);
Corpus load_corpus(const std::string& dir);

// contiguous 7:2:1 split into train / test / val
struct SplitIndices {
  std::vector<int> train, test, val;
};
SplitIndices split_7_2_1(int n);

}  // namespace comg
