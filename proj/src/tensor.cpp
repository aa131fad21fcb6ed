#include "comg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace comg {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int numel_of(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

void op_shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

Tensor Tensor::zeros(const Shape& shape) {
  return from(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), 0.0));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return from(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), v));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> data) {
  if (static_cast<int>(data.size()) != numel_of(shape))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = shape;
  n->value = std::move(data);
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(const Shape& shape, std::vector<double> data) {
  Tensor t = from(shape, std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->shape;
}

int Tensor::numel() const { return node_ ? node_->numel() : 0; }

std::vector<double>& Tensor::data() {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->value;
}

const std::vector<double>& Tensor::data() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("use of undefined tensor");
  node_->requires_grad = on;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.size() != node_->value.size())
    throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::clone_detached(bool requires_grad) const {
  Tensor t = from(shape(), data());
  t.set_requires_grad(requires_grad);
  return t;
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward() on undefined tensor");
  if (node_->numel() != 1)
    throw std::logic_error("backward() root must be scalar, got " + shape_str(node_->shape));

  // iterative post-order DFS: inputs appear before consumers
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  std::vector<std::pair<detail::TensorNode*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::TensorNode* p = n->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

Tensor make_result(Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& parents,
                   std::function<void()> backward) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool needs = false;
    for (const Tensor& p : parents)
      if (p.defined() && p.requires_grad()) needs = true;
    if (needs) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const Tensor& p : parents)
        if (p.defined()) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor::wrap(std::move(n));
}

}  // namespace comg
