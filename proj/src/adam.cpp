#include "comg/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace comg {

AdamOptimizer::AdamOptimizer(const std::map<std::string, Tensor>& params, double default_lr,
                             std::vector<LrGroup> groups, AdamConfig cfg)
    : params_(params), groups_(std::move(groups)), default_lr_(default_lr), cfg_(cfg) {
  for (const auto& [name, t] : params_) {
    m_[name].assign(static_cast<size_t>(t.numel()), 0.0);
    v_[name].assign(static_cast<size_t>(t.numel()), 0.0);
  }
}

double AdamOptimizer::lr_for(const std::string& name) const {
  for (const auto& g : groups_)
    if (name.rfind(g.prefix, 0) == 0) return g.lr;
  return default_lr_;
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, t] : params_) {
    Tensor copy = t;
    copy.zero_grad();
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, t] : params_) {
    Tensor tensor = t;
    auto& m = m_[name];
    auto& v = v_[name];
    auto& p = tensor.data();
    const double lr = lr_for(name);
    const bool has_grad = tensor.has_grad();
    for (size_t i = 0; i < p.size(); ++i) {
      const double g = has_grad ? tensor.grad()[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

AdamOptimizer::State AdamOptimizer::state() const { return State{t_, m_, v_}; }

void AdamOptimizer::restore(const State& s) {
  for (const auto& [name, t] : params_) {
    if (!s.m.count(name) || !s.v.count(name))
      throw std::runtime_error("optimizer state missing parameter " + name);
    if (s.m.at(name).size() != static_cast<size_t>(t.numel()))
      throw std::runtime_error("optimizer state size mismatch for parameter " + name);
  }
  t_ = s.t;
  m_ = s.m;
  v_ = s.v;
}

}  // namespace comg
