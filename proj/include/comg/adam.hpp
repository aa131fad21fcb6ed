#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "comg/tensor.hpp"

namespace comg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Learning-rate group: parameters whose name starts with `prefix` use `lr`.
// First matching group wins; unmatched parameters fall back to default_lr.
struct LrGroup {
  std::string prefix;
  double lr;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const std::map<std::string, Tensor>& params, double default_lr,
                std::vector<LrGroup> groups = {}, AdamConfig cfg = {});

  // bias-corrected moment update from the current grad buffers;
  // parameters without a grad buffer this step are treated as zero-grad
  void step();
  void zero_grad();

  double lr_for(const std::string& name) const;
  int64_t step_count() const { return t_; }

  // checkpoint plumbing: moments keyed by parameter name
  struct State {
    int64_t t;
    std::map<std::string, std::vector<double>> m, v;
  };
  State state() const;
  void restore(const State& s);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> m_, v_;
  std::vector<LrGroup> groups_;
  double default_lr_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace comg
