#include "comg/params.hpp"

#include <cmath>
#include <stdexcept>

namespace comg {

std::pair<int, int> fan_in_out(const Shape& shape) {
  if (shape.size() == 1) return {shape[0], shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  if (shape.size() == 4) {
    const int rf = shape[2] * shape[3];
    return {shape[1] * rf, shape[0] * rf};
  }
  throw std::invalid_argument("fan_in_out: unsupported shape " + shape_str(shape));
}

Tensor ParamRegistry::create(const std::string& name, const Shape& shape, Init init, Rng& rng) {
  if (params_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
  std::vector<double> data(static_cast<size_t>(numel_of(shape)));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      for (double& v : data) v = 1.0;
      break;
    case Init::XavierUniform: {
      const auto [fin, fout] = fan_in_out(shape);
      const double bound = std::sqrt(6.0 / (fin + fout));
      for (double& v : data) v = rng.uniform(-bound, bound);
      break;
    }
  }
  Tensor t = Tensor::param(shape, std::move(data));
  params_.emplace(name, t);
  return t;
}

Tensor ParamRegistry::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

int ParamRegistry::total_parameters() const {
  int n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamRegistry::zero_grad_all() {
  for (auto& [name, t] : params_) {
    Tensor copy = t;
    copy.zero_grad();
  }
}

}  // namespace comg
