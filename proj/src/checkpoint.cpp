#include "comg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace comg {

namespace {

template <class T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("truncated checkpoint " + path);
  return v;
}

void put_string(std::ofstream& f, const std::string& s) {
  put(f, static_cast<uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& f, const std::string& path) {
  const uint32_t n = get<uint32_t>(f, path);
  std::string s(n, '\0');
  f.read(s.data(), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("truncated checkpoint " + path);
  return s;
}

void put_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::ifstream& f, std::vector<double>& v, const std::string& path) {
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint " + path);
}

void put_model_cfg(std::ofstream& f, const ModelConfig& c) {
  put(f, static_cast<int32_t>(c.dim));
  put(f, static_cast<int32_t>(c.heads));
  for (int ch : c.backbone_channels) put(f, static_cast<int32_t>(ch));
  put(f, static_cast<int32_t>(c.refiner_channels));
  put(f, static_cast<int32_t>(c.text_layers));
  put(f, static_cast<int32_t>(c.memory_layers));
  put(f, static_cast<int32_t>(c.decoder_layers));
  put(f, static_cast<int32_t>(c.ffn_mult));
  put(f, static_cast<int32_t>(c.max_len));
  put(f, static_cast<uint64_t>(c.init_seed));
}

ModelConfig get_model_cfg(std::ifstream& f, const std::string& path) {
  ModelConfig c;
  c.dim = get<int32_t>(f, path);
  c.heads = get<int32_t>(f, path);
  for (int i = 0; i < 4; ++i) c.backbone_channels[static_cast<size_t>(i)] = get<int32_t>(f, path);
  c.refiner_channels = get<int32_t>(f, path);
  c.text_layers = get<int32_t>(f, path);
  c.memory_layers = get<int32_t>(f, path);
  c.decoder_layers = get<int32_t>(f, path);
  c.ffn_mult = get<int32_t>(f, path);
  c.max_len = get<int32_t>(f, path);
  c.init_seed = get<uint64_t>(f, path);
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ComgModel& model, const AdamOptimizer* opt,
                     uint32_t epoch, const std::array<uint64_t, 4>& rng_state, uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(kCheckpointMagic, 4);
  put(f, kCheckpointVersion);
  put(f, config_hash);
  put(f, epoch);
  for (uint64_t w : rng_state) put(f, w);
  put_model_cfg(f, model.config());

  const auto& tokens = model.vocab().tokens();
  put(f, static_cast<uint32_t>(tokens.size() - 4));
  for (size_t i = 4; i < tokens.size(); ++i) put_string(f, tokens[i]);

  const auto& params = model.registry().all();
  put(f, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_string(f, name);
    put(f, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put(f, static_cast<uint32_t>(d));
    put_doubles(f, t.data());
  }

  put(f, static_cast<uint8_t>(opt ? 1 : 0));
  if (opt) {
    const AdamOptimizer::State st = opt->state();
    put(f, static_cast<int64_t>(st.t));
    for (const auto& [name, t] : params) {
      put_doubles(f, st.m.at(name));
      put_doubles(f, st.v.at(name));
    }
  }
  if (!f) throw std::runtime_error("write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const uint32_t version = get<uint32_t>(f, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  CheckpointData d;
  d.config_hash = get<uint64_t>(f, path);
  d.epoch = get<uint32_t>(f, path);
  for (auto& w : d.rng_state) w = get<uint64_t>(f, path);
  d.model_cfg = get_model_cfg(f, path);

  const uint32_t n_tokens = get<uint32_t>(f, path);
  d.vocab_tokens.reserve(n_tokens);
  for (uint32_t i = 0; i < n_tokens; ++i) d.vocab_tokens.push_back(get_string(f, path));

  const uint32_t n_params = get<uint32_t>(f, path);
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = get_string(f, path);
    const uint32_t rank = get<uint32_t>(f, path);
    Shape shape;
    for (uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get<uint32_t>(f, path)));
    std::vector<double> data(static_cast<size_t>(numel_of(shape)));
    get_doubles(f, data, path);
    d.params.emplace(name, std::make_pair(std::move(shape), std::move(data)));
  }

  const uint8_t has_opt = get<uint8_t>(f, path);
  if (has_opt) {
    AdamOptimizer::State st;
    st.t = get<int64_t>(f, path);
    for (const auto& [name, sv] : d.params) {
      std::vector<double> m(sv.second.size()), v(sv.second.size());
      get_doubles(f, m, path);
      get_doubles(f, v, path);
      st.m.emplace(name, std::move(m));
      st.v.emplace(name, std::move(v));
    }
    d.optimizer = std::move(st);
  }
  return d;
}

void apply_checkpoint(const CheckpointData& data, ComgModel& model) {
  for (const auto& [name, t] : model.registry().all()) {
    auto it = data.params.find(name);
    if (it == data.params.end())
      throw std::runtime_error("checkpoint missing parameter " + name);
    if (it->second.first != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for parameter " + name + ": model " +
                               shape_str(t.shape()) + " vs stored " + shape_str(it->second.first));
    Tensor tensor = t;
    tensor.data() = it->second.second;
  }
  for (const auto& [name, sv] : data.params)
    if (!model.registry().contains(name))
      throw std::runtime_error("checkpoint has unknown parameter " + name);
}

std::unique_ptr<ComgModel> model_from_checkpoint(const CheckpointData& data, const DiseaseGraph& graph) {
  const Vocabulary vocab = Vocabulary::from_tokens(data.vocab_tokens);
  auto model = std::make_unique<ComgModel>(data.model_cfg, vocab, graph);
  apply_checkpoint(data, *model);
  return model;
}

}  // namespace comg
