#include "comg/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace comg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config key " + key + ": expected integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config key " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config key " + key + ": expected number, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Setter> setters;

  auto reg_int = [&](const std::string& name, int& slot) {
    setters[name] = [name, &slot](const std::string& k, const std::string& v) { slot = to_int(k, v); };
  };
  auto reg_double = [&](const std::string& name, double& slot) {
    setters[name] = [name, &slot](const std::string& k, const std::string& v) { slot = to_double(k, v); };
  };
  auto reg_u64 = [&](const std::string& name, uint64_t& slot) {
    setters[name] = [name, &slot](const std::string& k, const std::string& v) { slot = to_u64(k, v); };
  };
  auto reg_string = [&](const std::string& name, std::string& slot) {
    setters[name] = [name, &slot](const std::string&, const std::string& v) { slot = v; };
  };

  reg_int("corpus.n", cfg.corpus.n);
  reg_int("corpus.height", cfg.corpus.height);
  reg_int("corpus.width", cfg.corpus.width);
  reg_double("corpus.p_disease", cfg.corpus.p_disease);
  reg_u64("corpus.seed", cfg.corpus.seed);
  reg_double("corpus.lesion_delta", cfg.corpus.lesion_delta);
  reg_double("corpus.lesion_area_frac", cfg.corpus.lesion_area_frac);
  reg_int("corpus.max_report_len", cfg.corpus.max_report_len);

  reg_int("model.dim", cfg.model.dim);
  reg_int("model.heads", cfg.model.heads);
  for (int i = 0; i < 4; ++i) {
    setters["model.backbone_channels" + std::to_string(i + 1)] =
        [i, &cfg](const std::string& k, const std::string& v) {
          cfg.model.backbone_channels[static_cast<size_t>(i)] = to_int(k, v);
        };
  }
  reg_int("model.refiner_channels", cfg.model.refiner_channels);
  reg_int("model.text_layers", cfg.model.text_layers);
  reg_int("model.memory_layers", cfg.model.memory_layers);
  reg_int("model.decoder_layers", cfg.model.decoder_layers);
  reg_int("model.ffn_mult", cfg.model.ffn_mult);
  reg_int("model.max_len", cfg.model.max_len);
  reg_u64("model.init_seed", cfg.model.init_seed);

  reg_double("train.beta", cfg.train.beta);
  reg_double("train.theta", cfg.train.theta);
  reg_double("train.lr_backbone", cfg.train.lr_backbone);
  reg_double("train.lr_rest", cfg.train.lr_rest);
  reg_int("train.epochs_stage1", cfg.train.epochs_stage1);
  reg_int("train.epochs_stage2", cfg.train.epochs_stage2);
  reg_int("train.batch_size", cfg.train.batch_size);
  reg_u64("train.seed", cfg.train.seed);
  reg_string("train.rl_reward", cfg.train.rl_reward);

  reg_int("generation.beam_width", cfg.generation.beam_width);
  reg_int("generation.max_len", cfg.generation.max_len);
  reg_double("generation.length_penalty", cfg.generation.length_penalty);

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      if (section != "corpus" && section != "model" && section != "train" && section != "generation")
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown section [" +
                                    section + "]");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": key outside any section");
    const std::string key = section + "." + trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key " + key);
    it->second(key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string run_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[corpus]\n";
  os << "n = " << cfg.corpus.n << '\n';
  os << "height = " << cfg.corpus.height << '\n';
  os << "width = " << cfg.corpus.width << '\n';
  os << "p_disease = " << fmt_double(cfg.corpus.p_disease) << '\n';
  os << "seed = " << cfg.corpus.seed << '\n';
  os << "lesion_delta = " << fmt_double(cfg.corpus.lesion_delta) << '\n';
  os << "lesion_area_frac = " << fmt_double(cfg.corpus.lesion_area_frac) << '\n';
  os << "max_report_len = " << cfg.corpus.max_report_len << '\n';
  os << "[model]\n";
  os << "dim = " << cfg.model.dim << '\n';
  os << "heads = " << cfg.model.heads << '\n';
  for (int i = 0; i < 4; ++i)
    os << "backbone_channels" << i + 1 << " = " << cfg.model.backbone_channels[static_cast<size_t>(i)] << '\n';
  os << "refiner_channels = " << cfg.model.refiner_channels << '\n';
  os << "text_layers = " << cfg.model.text_layers << '\n';
  os << "memory_layers = " << cfg.model.memory_layers << '\n';
  os << "decoder_layers = " << cfg.model.decoder_layers << '\n';
  os << "ffn_mult = " << cfg.model.ffn_mult << '\n';
  os << "max_len = " << cfg.model.max_len << '\n';
  os << "init_seed = " << cfg.model.init_seed << '\n';
  os << "[train]\n";
  os << "beta = " << fmt_double(cfg.train.beta) << '\n';
  os << "theta = " << fmt_double(cfg.train.theta) << '\n';
  os << "lr_backbone = " << fmt_double(cfg.train.lr_backbone) << '\n';
  os << "lr_rest = " << fmt_double(cfg.train.lr_rest) << '\n';
  os << "epochs_stage1 = " << cfg.train.epochs_stage1 << '\n';
  os << "epochs_stage2 = " << cfg.train.epochs_stage2 << '\n';
  os << "batch_size = " << cfg.train.batch_size << '\n';
  os << "seed = " << cfg.train.seed << '\n';
  os << "rl_reward = " << cfg.train.rl_reward << '\n';
  os << "[generation]\n";
  os << "beam_width = " << cfg.generation.beam_width << '\n';
  os << "max_len = " << cfg.generation.max_len << '\n';
  os << "length_penalty = " << fmt_double(cfg.generation.length_penalty) << '\n';
  return os.str();
}

uint64_t run_config_hash(const RunConfig& cfg) {
  const std::string text = run_config_text(cfg);
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace comg
