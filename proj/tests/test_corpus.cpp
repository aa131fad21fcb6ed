#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "comg/corpus.hpp"

using namespace comg;
namespace fs = std::filesystem;

namespace {
CorpusConfig small_cfg() {
  CorpusConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.p_disease = 0.5;
  return cfg;
}
}  // namespace

TEST_CASE("disease graph covers four organs with disjoint keywords") {
  const DiseaseGraph g = build_disease_graph();
  for (Organ og : kOrgans) CHECK(!g.diseases(og).empty());
  CHECK(g.organ_of("cardiomegaly") == Organ::Heart);
  CHECK(g.organ_of("fracture") == Organ::Bone);
  CHECK(g.organ_of("widened mediastinum") == Organ::Mediastinum);
  CHECK(!g.organ_of("sunburn").has_value());
  std::set<std::string> seen;
  for (const auto& kw : g.all_keywords()) {
    CHECK(seen.insert(kw).second);  // each keyword belongs to exactly one organ
    CHECK(g.organ_of(kw).has_value());
  }
}

TEST_CASE("p_disease 0 yields healthy reports, 1 yields one disease per organ") {
  CorpusConfig cfg = small_cfg();
  const DiseaseGraph g = build_disease_graph();
  cfg.p_disease = 0.0;
  for (uint64_t seed : {7ull, 8ull, 9ull}) {
    const Sample s = generate_sample(seed, cfg, g);
    CHECK(s.labels.empty());
    CHECK(extract_disease_keywords(tokenize_words(s.report), g).empty());
  }
  cfg.p_disease = 1.0;
  for (uint64_t seed : {7ull, 8ull, 9ull}) {
    const Sample s = generate_sample(seed, cfg, g);
    CHECK(s.labels.size() == 4);
    std::set<Organ> organs;
    for (const auto& kw : s.labels) organs.insert(*g.organ_of(kw));
    CHECK(organs.size() == 4);
  }
}

TEST_CASE("generation is a pure function of seed and config") {
  const CorpusConfig cfg = small_cfg();
  const Sample a = generate_sample(42, cfg);
  const Sample b = generate_sample(42, cfg);
  CHECK(a.image == b.image);
  CHECK(a.report == b.report);
  CHECK(a.labels == b.labels);
  for (Organ og : kOrgans)
    CHECK(a.masks[static_cast<size_t>(og)] == b.masks[static_cast<size_t>(og)]);
  const Sample c = generate_sample(43, cfg);
  CHECK(a.image.v != c.image.v);
}

TEST_CASE("grids below 16 pixels are rejected") {
  CorpusConfig cfg = small_cfg();
  cfg.height = 15;
  CHECK_THROWS_AS(generate_sample(1, cfg), std::invalid_argument);
  cfg.height = 32;
  cfg.width = 8;
  CHECK_THROWS_AS(generate_sample(1, cfg), std::invalid_argument);
}

TEST_CASE("generated samples satisfy the structural invariants") {
  const CorpusConfig cfg = small_cfg();
  const DiseaseGraph g = build_disease_graph();
  for (uint64_t seed = 100; seed < 150; ++seed) {
    const Sample s = generate_sample(seed, cfg, g);
    for (double v : s.image.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (Organ og : kOrgans) {
      const Grid& m = s.masks[static_cast<size_t>(og)];
      CHECK(grid_is_binary(m));
      double area = 0;
      for (double v : m.v) area += v;
      CHECK(area > 0);  // organ regions are non-empty
    }
    // every label appears verbatim; extraction reproduces the labels exactly
    for (const auto& kw : s.labels) CHECK(s.report.find(kw) != std::string::npos);
    CHECK(extract_disease_keywords(tokenize_words(s.report), g) == s.labels);
    CHECK(static_cast<int>(tokenize_words(s.report).size()) + 2 <= cfg.max_report_len);
  }
}

TEST_CASE("diseased organs shift the mean intensity inside their mask") {
  const CorpusConfig cfg = small_cfg();
  const DiseaseGraph g = build_disease_graph();
  int checked = 0;
  for (uint64_t seed = 200; seed < 230; ++seed) {
    const SyntheticScene scene = make_scene(seed, cfg, g);
    const Sample diseased = render_scene(scene, cfg, g);
    const Sample healthy = render_scene(scene, cfg, g, /*healthy_override=*/true);
    for (Organ og : kOrgans) {
      if (scene.disease[static_cast<size_t>(og)] < 0) continue;
      const Grid& m = diseased.masks[static_cast<size_t>(og)];
      double diff = 0, area = 0;
      for (size_t i = 0; i < m.v.size(); ++i)
        if (m.v[i] == 1.0) {
          diff += diseased.image.v[i] - healthy.image.v[i];
          area += 1;
        }
      CHECK(diff / area >= cfg.lesion_delta * cfg.lesion_area_frac * 0.999);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("vocabulary maps rare tokens to unk and frequent tokens to ids") {
  std::vector<std::string> reports;
  for (int i = 0; i < 100; ++i) reports.push_back("the lung is clear");
  reports.push_back("a cat sat");
  reports.push_back("a cat slept");
  const Vocabulary v = Vocabulary::build(reports, 3);
  CHECK(v.id("lung") >= 4);
  CHECK(v.id("cat") == Vocabulary::kUnk);   // appears twice, below the threshold
  CHECK(v.id("sat") == Vocabulary::kUnk);
  CHECK(v.id("never-seen") == Vocabulary::kUnk);

  const std::vector<int> ids = v.encode("the lung is clear");
  CHECK(ids.front() == Vocabulary::kBegin);
  CHECK(ids.back() == Vocabulary::kEnd);
  CHECK(join_words(v.decode_words(ids)) == "the lung is clear");
}

TEST_CASE("vocabulary threshold is exact") {
  std::vector<std::string> reports;
  for (int i = 0; i < 3; ++i) reports.push_back("exactly three");
  for (int i = 0; i < 2; ++i) reports.push_back("only two");
  const Vocabulary v = Vocabulary::build(reports, 3);
  CHECK(v.id("exactly") != Vocabulary::kUnk);
  CHECK(v.id("three") != Vocabulary::kUnk);
  CHECK(v.id("only") == Vocabulary::kUnk);
  CHECK(v.id("two") == Vocabulary::kUnk);
}

TEST_CASE("tokenizer strips punctuation and lowercases") {
  CHECK(tokenize_words("The Heart, is Normal.") == std::vector<std::string>{"the", "heart", "is", "normal"});
  CHECK(tokenize_words("") == std::vector<std::string>{});
  CHECK(tokenize_words("  spaced   out  ") == std::vector<std::string>{"spaced", "out"});
}

TEST_CASE("eval preprocessing is deterministic and normalizes the image") {
  const CorpusConfig cfg = small_cfg();
  const Sample s = generate_sample(5, cfg);
  Rng r1(1), r2(2);
  const Sample a = preprocess(s, false, r1);
  const Sample b = preprocess(s, false, r2);
  CHECK(a.image == b.image);
  double mean = 0;
  for (double v : a.image.v) mean += v;
  mean /= static_cast<double>(a.image.v.size());
  CHECK(std::fabs(mean) < 1e-6);
  double var = 0;
  for (double v : a.image.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(a.image.v.size());
  CHECK(std::fabs(var - 1.0) < 1e-6);
}

TEST_CASE("train preprocessing transforms image and masks jointly") {
  const CorpusConfig cfg = small_cfg();
  const DiseaseGraph g = build_disease_graph();
  const Sample s = generate_sample(6, cfg, g);

  // overlap between mask and bright pixels must be preserved under flips:
  // count image-mask overlap on the raw sample and a flipped copy
  Rng rng(3);
  int flips_seen = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Sample t = preprocess(s, true, rng);
    CHECK(t.image.h == cfg.height);
    CHECK(t.image.w == cfg.width);
    for (Organ og : kOrgans) CHECK(grid_is_binary(t.masks[static_cast<size_t>(og)]));
  }
  // flip alone (crop offset centered) keeps the in-mask pixel sum exactly
  PreprocessConfig pp;
  pp.crop_pad = 0;
  pp.flip_prob = 1.0;
  Rng flip_rng(4);
  const Sample flipped = preprocess(s, true, flip_rng, pp);
  Rng eval_rng(5);
  const Sample plain = preprocess(s, false, eval_rng);
  for (Organ og : kOrgans) {
    const Grid& m0 = plain.masks[static_cast<size_t>(og)];
    const Grid& m1 = flipped.masks[static_cast<size_t>(og)];
    double s0 = 0, s1 = 0;
    for (size_t i = 0; i < m0.v.size(); ++i) {
      s0 += m0.v[i] * plain.image.v[i];
      s1 += m1.v[i] * flipped.image.v[i];
    }
    CHECK(s0 == doctest::Approx(s1).epsilon(1e-9));
    ++flips_seen;
  }
  CHECK(flips_seen == 4);
}

TEST_CASE("keyword extraction honours the negation window") {
  const DiseaseGraph g = build_disease_graph();
  CHECK(extract_disease_keywords(tokenize_words("there is cardiomegaly"), g) ==
        std::vector<std::string>{"cardiomegaly"});
  CHECK(extract_disease_keywords(tokenize_words("no pneumothorax is seen"), g).empty());
  CHECK(extract_disease_keywords(tokenize_words("without focal effusion"), g).empty());
  CHECK(extract_disease_keywords(tokenize_words("lungs are free of edema"), g).empty());
  CHECK(extract_disease_keywords({}, g).empty());
  // cue outside the 3-token window does not negate
  CHECK(extract_disease_keywords(tokenize_words("no acute process is seen but pneumonia persists"), g) ==
        std::vector<std::string>{"pneumonia"});
  // multiword keyword with a negation
  CHECK(extract_disease_keywords(tokenize_words("no widened mediastinum"), g).empty());
  CHECK(extract_disease_keywords(tokenize_words("there is widened mediastinum"), g) ==
        std::vector<std::string>{"widened mediastinum"});
}

TEST_CASE("corpus round-trips through the directory format") {
  CorpusConfig cfg = small_cfg();
  cfg.n = 12;
  cfg.seed = 77;
  const DiseaseGraph g = build_disease_graph();
  const std::string dir = (fs::temp_directory_path() / "comg_corpus_test").string();
  fs::remove_all(dir);
  write_corpus(dir, cfg, g);
  CHECK(fs::exists(fs::path(dir) / "manifest.jsonl"));
  CHECK(fs::exists(fs::path(dir) / "meta.json"));

  const Corpus c = load_corpus(dir);
  REQUIRE(static_cast<int>(c.samples.size()) == cfg.n);
  CHECK(c.cfg.height == cfg.height);
  for (int i = 0; i < cfg.n; ++i) {
    const Sample fresh = generate_sample(cfg.seed + static_cast<uint64_t>(i), cfg, g);
    CHECK(c.samples[static_cast<size_t>(i)].image == fresh.image);
    CHECK(c.samples[static_cast<size_t>(i)].report == fresh.report);
    CHECK(c.samples[static_cast<size_t>(i)].labels == fresh.labels);
    for (Organ og : kOrgans)
      CHECK(c.samples[static_cast<size_t>(i)].masks[static_cast<size_t>(og)] ==
            fresh.masks[static_cast<size_t>(og)]);
  }
  fs::remove_all(dir);
}

TEST_CASE("grid files reject corrupt headers") {
  const std::string path = (fs::temp_directory_path() / "comg_grid_test.bin").string();
  Grid g(4, 4, 0.5);
  write_grid(path, g, kGridDtypeF64);
  const Grid back = read_grid(path);
  CHECK(back == g);
  // truncate and expect failure
  fs::resize_file(path, 10);
  CHECK_THROWS(read_grid(path));
  fs::remove(path);
}

TEST_CASE("split is 7:2:1 train/test/val") {
  const SplitIndices s = split_7_2_1(300);
  CHECK(s.train.size() == 210);
  CHECK(s.test.size() == 60);
  CHECK(s.val.size() == 30);
  CHECK(s.train.front() == 0);
  CHECK(s.test.front() == 210);
  CHECK(s.val.front() == 270);
}

TEST_CASE("mask resize keeps masks binary") {
  const CorpusConfig cfg = small_cfg();
  const Sample s = generate_sample(9, cfg);
  for (Organ og : kOrgans) {
    const Grid low = resize_mask_nearest(s.masks[static_cast<size_t>(og)], 8, 8);
    CHECK(low.h == 8);
    CHECK(low.w == 8);
    CHECK(grid_is_binary(low));
  }
}
