#include "comg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace comg {

std::string organ_name(Organ og) {
  switch (og) {
    case Organ::Bone: return "bone";
    case Organ::Lung: return "lung";
    case Organ::Heart: return "heart";
    case Organ::Mediastinum: return "mediastinum";
  }
  throw std::logic_error("bad organ value");
}

Organ organ_from_name(const std::string& name) {
  for (Organ og : kOrgans)
    if (organ_name(og) == name) return og;
  throw std::invalid_argument("unknown organ: " + name);
}

std::optional<Organ> DiseaseGraph::organ_of(const std::string& keyword) const {
  for (Organ og : kOrgans)
    for (const auto& e : diseases(og))
      if (e.keyword == keyword) return og;
  return std::nullopt;
}

std::vector<std::string> DiseaseGraph::all_keywords() const {
  std::vector<std::string> out;
  for (Organ og : kOrgans)
    for (const auto& e : diseases(og)) out.push_back(e.keyword);
  return out;
}

DiseaseGraph build_disease_graph() {
  DiseaseGraph g;
  g.entries[static_cast<size_t>(Organ::Bone)] = {
      {"fracture", "acute fracture of the visualized bones"},
      {"degenerative change", "degenerative change of the thoracic spine"},
  };
  g.entries[static_cast<size_t>(Organ::Lung)] = {
      {"pneumonia", "focal consolidation concerning for pneumonia"},
      {"pneumothorax", "pneumothorax with a visible pleural line"},
      {"atelectasis", "atelectasis at the lung base"},
      {"edema", "pulmonary edema with vascular congestion"},
      {"effusion", "pleural effusion blunting the costophrenic angle"},
      {"opacity", "focal opacity in the lung field"},
  };
  g.entries[static_cast<size_t>(Organ::Heart)] = {
      {"cardiomegaly", "cardiomegaly with an enlarged cardiac silhouette"},
  };
  g.entries[static_cast<size_t>(Organ::Mediastinum)] = {
      {"widened mediastinum", "widened mediastinum contour"},
      {"hilar enlargement", "hilar enlargement of the pulmonary vessels"},
  };
  return g;
}

bool grid_is_binary(const Grid& g) {
  for (double v : g.v)
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

Grid resize_mask_nearest(const Grid& mask, int out_h, int out_w) {
  Grid out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(mask.h - 1, y * mask.h / out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(mask.w - 1, x * mask.w / out_w);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

SyntheticScene make_scene(uint64_t seed, const CorpusConfig& cfg, const DiseaseGraph& graph) {
  if (cfg.height < 16 || cfg.width < 16)
    throw std::invalid_argument("corpus grids must be at least 16x16, got " + std::to_string(cfg.height) +
                                "x" + std::to_string(cfg.width));
  Rng rng(seed);
  SyntheticScene sc;
  sc.rng_seed = seed;
  sc.heart_cx = rng.uniform(0.42, 0.48);
  sc.heart_cy = rng.uniform(0.58, 0.66);
  sc.heart_rx = rng.uniform(0.14, 0.18);
  sc.heart_ry = rng.uniform(0.11, 0.15);
  sc.lung_cy = rng.uniform(0.42, 0.48);
  sc.lung_rx = rng.uniform(0.13, 0.17);
  sc.lung_ry = rng.uniform(0.25, 0.31);
  sc.lung_lx = rng.uniform(0.26, 0.30);
  sc.lung_rxc = rng.uniform(0.70, 0.74);
  sc.rib_count = rng.uniform_int(4, 6);
  sc.rib_phase = rng.uniform(0.10, 0.16);
  sc.rib_thickness = rng.uniform(0.035, 0.055);
  sc.med_cx = rng.uniform(0.48, 0.52);
  sc.med_halfw = rng.uniform(0.06, 0.08);
  for (Organ og : kOrgans) {
    const auto& diseases = graph.diseases(og);
    const bool sick = rng.bernoulli(cfg.p_disease);
    const int pick = rng.uniform_int(0, static_cast<int>(diseases.size()) - 1);
    sc.disease[static_cast<size_t>(og)] = sick ? pick : -1;
  }
  return sc;
}

namespace {

std::array<Grid, kNumOrgans> rasterize_masks(const SyntheticScene& sc, int h, int w) {
  std::array<Grid, kNumOrgans> masks;
  for (auto& m : masks) m = Grid(h, w, 0.0);

  auto px = [&](int x) { return (x + 0.5) / w; };
  auto py = [&](int y) { return (y + 0.5) / h; };
  auto in_ellipse = [](double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  };

  Grid& bone = masks[static_cast<size_t>(Organ::Bone)];
  Grid& lung = masks[static_cast<size_t>(Organ::Lung)];
  Grid& heart = masks[static_cast<size_t>(Organ::Heart)];
  Grid& med = masks[static_cast<size_t>(Organ::Mediastinum)];

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fx = px(x), fy = py(y);
      if (in_ellipse(fx, fy, sc.lung_lx, sc.lung_cy, sc.lung_rx, sc.lung_ry) ||
          in_ellipse(fx, fy, sc.lung_rxc, sc.lung_cy, sc.lung_rx, sc.lung_ry))
        lung.at(y, x) = 1.0;
      if (in_ellipse(fx, fy, sc.heart_cx, sc.heart_cy, sc.heart_rx, sc.heart_ry)) heart.at(y, x) = 1.0;
      if (fx >= sc.med_cx - sc.med_halfw && fx <= sc.med_cx + sc.med_halfw && fy >= 0.20 && fy <= 0.85)
        med.at(y, x) = 1.0;
    }

  // ribs: horizontal bars rasterized by row so each bar covers >= 1 row
  const double spacing = (0.80 - sc.rib_phase) / sc.rib_count;
  const int x0 = std::clamp(static_cast<int>(std::lround(0.10 * w)), 0, w - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(0.90 * w)), 1, w);
  for (int r = 0; r < sc.rib_count; ++r) {
    const double top = sc.rib_phase + r * spacing;
    int row0 = std::clamp(static_cast<int>(std::lround(top * h)), 0, h - 1);
    int row1 = std::clamp(static_cast<int>(std::lround((top + sc.rib_thickness) * h)), row0 + 1, h);
    for (int y = row0; y < row1; ++y)
      for (int x = x0; x < x1; ++x) bone.at(y, x) = 1.0;
  }
  return masks;
}

double organ_base_intensity(Organ og) {
  switch (og) {
    case Organ::Lung: return 0.30;
    case Organ::Mediastinum: return 0.45;
    case Organ::Heart: return 0.55;
    case Organ::Bone: return 0.50;
  }
  return 0.0;
}

// disease-dependent lesion brightness, always >= cfg.lesion_delta; the 1.4x
// cap keeps base(0.55) + delta + noise below 1 so nothing ever clips
double lesion_delta_for(const CorpusConfig& cfg, int disease_index) {
  return cfg.lesion_delta * (1.0 + 0.08 * disease_index);
}

// anchor point inside the organ bounding box, distinct per disease index
std::pair<double, double> lesion_anchor(int disease_index) {
  static constexpr std::pair<double, double> spots[] = {
      {0.30, 0.30}, {0.70, 0.30}, {0.30, 0.70}, {0.70, 0.70}, {0.50, 0.30}, {0.50, 0.70},
  };
  return spots[disease_index % 6];
}

std::string report_sentence(Organ og, const std::string& keyword) {
  if (keyword.empty()) {
    switch (og) {
      case Organ::Bone: return "the bony structures are intact";
      case Organ::Lung: return "the lungs are clear";
      case Organ::Heart: return "the heart size is normal";
      case Organ::Mediastinum: return "the mediastinal contours are unremarkable";
    }
  }
  switch (og) {
    case Organ::Bone: return "the bones show " + keyword;
    case Organ::Lung: return "the lungs show " + keyword;
    case Organ::Heart: return "there is " + keyword;
    case Organ::Mediastinum: return "there is " + keyword;
  }
  throw std::logic_error("bad organ value");
}

}  // namespace

Sample render_scene(const SyntheticScene& sc, const CorpusConfig& cfg, const DiseaseGraph& graph,
                    bool healthy_override) {
  const int h = cfg.height, w = cfg.width;
  Sample s;
  s.seed = sc.rng_seed;
  s.masks = rasterize_masks(sc, h, w);
  s.image = Grid(h, w, 0.0);

  // base anatomy, later organs overwrite earlier ones
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) s.image.at(y, x) = 0.12;
  for (Organ og : {Organ::Lung, Organ::Mediastinum, Organ::Heart, Organ::Bone}) {
    const Grid& m = s.masks[static_cast<size_t>(og)];
    const double base = organ_base_intensity(og);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (m.at(y, x) == 1.0) s.image.at(y, x) = base;
  }

  // lesions: the full configured fraction of the organ area, one delta per
  // pixel. Pixels exclusive to the organ are claimed first; pixels already
  // claimed by an earlier organ's lesion are skipped so deltas never stack.
  std::vector<bool> claimed(static_cast<size_t>(h) * w, false);
  for (Organ og : kOrgans) {
    const int di = healthy_override ? -1 : sc.disease[static_cast<size_t>(og)];
    if (di < 0) continue;
    const Grid& m = s.masks[static_cast<size_t>(og)];
    int mask_area = 0;
    double min_x = 1.0, max_x = 0.0, min_y = 1.0, max_y = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (m.at(y, x) != 1.0) continue;
        ++mask_area;
        const double fx = (x + 0.5) / w, fy = (y + 0.5) / h;
        min_x = std::min(min_x, fx); max_x = std::max(max_x, fx);
        min_y = std::min(min_y, fy); max_y = std::max(max_y, fy);
      }
    const auto [ax_frac, ay_frac] = lesion_anchor(di);
    const double ax = min_x + ax_frac * (max_x - min_x);
    const double ay = min_y + ay_frac * (max_y - min_y);
    // sort key: exclusivity first, then distance to the disease anchor
    std::vector<std::pair<double, size_t>> candidates;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t flat = static_cast<size_t>(y) * w + x;
        if (m.at(y, x) != 1.0 || claimed[flat]) continue;
        bool shared = false;
        for (Organ other : kOrgans)
          if (other != og && s.masks[static_cast<size_t>(other)].at(y, x) == 1.0) shared = true;
        const double fx = (x + 0.5) / w, fy = (y + 0.5) / h;
        const double d2 = (fx - ax) * (fx - ax) + (fy - ay) * (fy - ay);
        candidates.emplace_back((shared ? 10.0 : 0.0) + d2, flat);
      }
    std::sort(candidates.begin(), candidates.end());
    const size_t target = static_cast<size_t>(std::ceil(cfg.lesion_area_frac * mask_area));
    const size_t take = std::min(target, candidates.size());
    const double delta = lesion_delta_for(cfg, di);
    for (size_t i = 0; i < take; ++i) {
      s.image.v[candidates[i].second] += delta;
      claimed[candidates[i].second] = true;
    }
  }

  // deterministic texture noise, independent of the disease flags
  Rng noise_rng(sc.rng_seed ^ 0x9e3779b97f4a7c15ull);
  for (double& v : s.image.v) {
    v += 0.02 * (2.0 * noise_rng.uniform() - 1.0);
    v = std::clamp(v, 0.0, 1.0);
  }

  // one sentence per organ, disease keyword verbatim when present
  std::vector<std::string> sentences;
  for (Organ og : kOrgans) {
    const int di = healthy_override ? -1 : sc.disease[static_cast<size_t>(og)];
    if (di < 0) {
      sentences.push_back(report_sentence(og, ""));
    } else {
      const std::string& kw = graph.diseases(og)[static_cast<size_t>(di)].keyword;
      sentences.push_back(report_sentence(og, kw));
      s.labels.push_back(kw);
    }
  }
  std::ostringstream report;
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (i) report << ' ';
    report << sentences[i];
  }
  s.report = report.str();
  return s;
}

Sample generate_sample(uint64_t seed, const CorpusConfig& cfg, const DiseaseGraph& graph) {
  return render_scene(make_scene(seed, cfg, graph), cfg, graph);
}

Sample generate_sample(uint64_t seed, const CorpusConfig& cfg) {
  return generate_sample(seed, cfg, build_disease_graph());
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!cur.empty()) { words.push_back(cur); cur.clear(); }
    } else if (!std::ispunct(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<s>", "</s>", "<unk>"};
  for (int i = 0; i < static_cast<int>(id_to_token_.size()); ++i) token_to_id_[id_to_token_[static_cast<size_t>(i)]] = i;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& reports, int min_count) {
  if (reports.empty()) throw std::invalid_argument("vocabulary: empty report list");
  std::map<std::string, int> counts;
  for (const auto& r : reports)
    for (const auto& w : tokenize_words(r)) ++counts[w];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [tok, c] : counts)
    if (c >= min_count) kept.emplace_back(tok, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, c] : kept) {
    v.token_to_id_[tok] = v.size();
    v.id_to_token_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& non_reserved_tokens) {
  Vocabulary v;
  for (const auto& tok : non_reserved_tokens) {
    if (v.token_to_id_.count(tok)) throw std::invalid_argument("duplicate vocabulary token: " + tok);
    v.token_to_id_[tok] = v.size();
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int tid) const {
  if (tid < 0 || tid >= size()) throw std::out_of_range("token id " + std::to_string(tid) + " out of vocabulary");
  return id_to_token_[static_cast<size_t>(tid)];
}

std::vector<int> Vocabulary::encode(const std::string& text, bool add_markers) const {
  return encode_words(tokenize_words(text), add_markers);
}

std::vector<int> Vocabulary::encode_words(const std::vector<std::string>& words, bool add_markers) const {
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  if (add_markers) ids.push_back(kBegin);
  for (const auto& w : words) ids.push_back(id(w));
  if (add_markers) ids.push_back(kEnd);
  return ids;
}

std::vector<std::string> Vocabulary::decode_words(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int tid : ids) {
    if (tid == kPad || tid == kBegin || tid == kEnd) continue;
    words.push_back(token(tid));
  }
  return words;
}

namespace {
Grid crop_shifted(const Grid& g, int pad, int dy, int dx) {
  Grid out(g.h, g.w, 0.0);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const int sy = y + dy - pad;
      const int sx = x + dx - pad;
      if (sy >= 0 && sy < g.h && sx >= 0 && sx < g.w) out.at(y, x) = g.at(sy, sx);
    }
  return out;
}

Grid flip_horizontal(const Grid& g) {
  Grid out(g.h, g.w);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) out.at(y, x) = g.at(y, g.w - 1 - x);
  return out;
}
}  // namespace

Sample preprocess(const Sample& s, bool train_mode, Rng& rng, const PreprocessConfig& cfg) {
  Sample out = s;
  if (train_mode) {
    const int dy = rng.uniform_int(0, 2 * cfg.crop_pad);
    const int dx = rng.uniform_int(0, 2 * cfg.crop_pad);
    const bool flip = rng.bernoulli(cfg.flip_prob);
    out.image = crop_shifted(out.image, cfg.crop_pad, dy, dx);
    for (auto& m : out.masks) m = crop_shifted(m, cfg.crop_pad, dy, dx);
    if (flip) {
      out.image = flip_horizontal(out.image);
      for (auto& m : out.masks) m = flip_horizontal(m);
    }
  }
  double mean = 0.0;
  for (double v : out.image.v) mean += v;
  mean /= static_cast<double>(out.image.v.size());
  double var = 0.0;
  for (double v : out.image.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.image.v.size());
  const double inv = 1.0 / std::max(std::sqrt(var), 1e-8);
  for (double& v : out.image.v) v = (v - mean) * inv;
  return out;
}

std::vector<std::string> extract_disease_keywords(const std::vector<std::string>& words,
                                                  const DiseaseGraph& graph, int negation_window) {
  static const std::vector<std::string> unary_cues = {"no", "without"};
  std::vector<std::string> found;
  for (const auto& kw : graph.all_keywords()) {
    const std::vector<std::string> kw_words = tokenize_words(kw);
    if (kw_words.empty()) continue;
    bool present = false;
    for (size_t i = 0; i + kw_words.size() <= words.size() && !present; ++i) {
      bool match = true;
      for (size_t j = 0; j < kw_words.size(); ++j)
        if (words[i + j] != kw_words[j]) { match = false; break; }
      if (!match) continue;
      bool negated = false;
      const size_t lo = i >= static_cast<size_t>(negation_window) ? i - negation_window : 0;
      for (size_t j = lo; j < i; ++j) {
        for (const auto& cue : unary_cues)
          if (words[j] == cue) negated = true;
        if (words[j] == "free" && j + 1 < i && words[j + 1] == "of") negated = true;
      }
      if (!negated) present = true;
    }
    if (present) found.push_back(kw);
  }
  return found;
}

// ---- persistence ---------------------------------------------------------

namespace {
template <class T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_raw(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("truncated grid file");
  return v;
}
}  // namespace

void write_grid(const std::string& path, const Grid& g, uint32_t dtype) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write_raw(f, kGridMagic);
  write_raw(f, dtype);
  write_raw(f, static_cast<uint32_t>(g.h));
  write_raw(f, static_cast<uint32_t>(g.w));
  if (dtype == kGridDtypeF64) {
    f.write(reinterpret_cast<const char*>(g.v.data()), static_cast<std::streamsize>(g.v.size() * sizeof(double)));
  } else if (dtype == kGridDtypeU8) {
    std::vector<uint8_t> bytes(g.v.size());
    for (size_t i = 0; i < g.v.size(); ++i) bytes[i] = g.v[i] != 0.0 ? 1 : 0;
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    throw std::invalid_argument("unknown grid dtype " + std::to_string(dtype));
  }
  if (!f) throw std::runtime_error("write failed for " + path);
}

Grid read_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  if (read_raw<uint32_t>(f) != kGridMagic) throw std::runtime_error("bad grid magic in " + path);
  const uint32_t dtype = read_raw<uint32_t>(f);
  const uint32_t h = read_raw<uint32_t>(f);
  const uint32_t w = read_raw<uint32_t>(f);
  Grid g(static_cast<int>(h), static_cast<int>(w));
  if (dtype == kGridDtypeF64) {
    f.read(reinterpret_cast<char*>(g.v.data()), static_cast<std::streamsize>(g.v.size() * sizeof(double)));
  } else if (dtype == kGridDtypeU8) {
    std::vector<uint8_t> bytes(g.v.size());
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    for (size_t i = 0; i < bytes.size(); ++i) g.v[i] = bytes[i] ? 1.0 : 0.0;
  } else {
    throw std::runtime_error("unknown grid dtype in " + path);
  }
  if (!f) throw std::runtime_error("truncated grid file " + path);
  return g;
}

namespace {
std::string sample_stem(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", i);
  return buf;
}
}  // namespace

void write_corpus(const std::string& dir, const CorpusConfig& cfg, const DiseaseGraph& graph) {
  fs::create_directories(fs::path(dir) / "samples");
  json meta = {
      {"format", 1},          {"n", cfg.n},
      {"height", cfg.height}, {"width", cfg.width},
      {"p_disease", cfg.p_disease}, {"seed", cfg.seed},
      {"lesion_delta", cfg.lesion_delta}, {"lesion_area_frac", cfg.lesion_area_frac},
      {"max_report_len", cfg.max_report_len},
  };
  {
    std::ofstream mf(fs::path(dir) / "meta.json");
    mf << meta.dump(2) << '\n';
  }
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  for (int i = 0; i < cfg.n; ++i) {
    const Sample s = generate_sample(cfg.seed + static_cast<uint64_t>(i), cfg, graph);
    const std::string stem = "samples/" + sample_stem(i);
    write_grid((fs::path(dir) / (stem + ".image.bin")).string(), s.image, kGridDtypeF64);
    json masks_json;
    for (Organ og : kOrgans) {
      const std::string mpath = stem + "." + organ_name(og) + ".bin";
      write_grid((fs::path(dir) / mpath).string(), s.masks[static_cast<size_t>(og)], kGridDtypeU8);
      masks_json[organ_name(og)] = mpath;
    }
    json rec = {
        {"id", i},       {"seed", s.seed},   {"image", stem + ".image.bin"},
        {"masks", masks_json}, {"report", s.report}, {"labels", s.labels},
    };
    manifest << rec.dump() << '\n';
  }
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw std::runtime_error("missing meta.json in " + dir);
  json meta = json::parse(mf);
  Corpus c;
  c.cfg.n = meta.at("n").get<int>();
  c.cfg.height = meta.at("height").get<int>();
  c.cfg.width = meta.at("width").get<int>();
  c.cfg.p_disease = meta.at("p_disease").get<double>();
  c.cfg.seed = meta.at("seed").get<uint64_t>();
  c.cfg.lesion_delta = meta.at("lesion_delta").get<double>();
  c.cfg.lesion_area_frac = meta.at("lesion_area_frac").get<double>();
  c.cfg.max_report_len = meta.at("max_report_len").get<int>();

  std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("missing manifest.jsonl in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Sample s;
    s.seed = rec.at("seed").get<uint64_t>();
    s.report = rec.at("report").get<std::string>();
    s.labels = rec.at("labels").get<std::vector<std::string>>();
    s.image = read_grid((fs::path(dir) / rec.at("image").get<std::string>()).string());
    for (Organ og : kOrgans)
      s.masks[static_cast<size_t>(og)] =
          read_grid((fs::path(dir) / rec.at("masks").at(organ_name(og)).get<std::string>()).string());
    c.samples.push_back(std::move(s));
  }
  if (static_cast<int>(c.samples.size()) != c.cfg.n)
    throw std::runtime_error("manifest lists " + std::to_string(c.samples.size()) + " samples, meta says " +
                             std::to_string(c.cfg.n));
  return c;
}

SplitIndices split_7_2_1(int n) {
  SplitIndices s;
  const int n_train = n * 7 / 10;
  const int n_test = n * 2 / 10;
  for (int i = 0; i < n_train; ++i) s.train.push_back(i);
  for (int i = n_train; i < n_train + n_test; ++i) s.test.push_back(i);
  for (int i = n_train + n_test; i < n; ++i) s.val.push_back(i);
  return s;
}

}  // namespace comg
