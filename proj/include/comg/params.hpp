#pragma once

#include <map>
#include <string>

#include "comg/rng.hpp"
#include "comg/tensor.hpp"

namespace comg {

enum class Init { XavierUniform, Zeros, Ones };

// Named parameter store. std::map keeps iteration order stable, which the
// checkpoint format and optimizer rely on.
class ParamRegistry {
 public:
  Tensor create(const std::string& name, const Shape& shape, Init init, Rng& rng);

  const std::map<std::string, Tensor>& all() const { return params_; }
  Tensor at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  int total_parameters() const;
  void zero_grad_all();

 private:
  std::map<std::string, Tensor> params_;
};

// fan_in/fan_out for the Xavier bound; conv kernels use Cin*kh*kw / Cout*kh*kw
std::pair<int, int> fan_in_out(const Shape& shape);

}  // namespace comg
