#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace comg {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int numel_of(const Shape& s);

// Thread-local switch: while disabled, ops skip recording the backward graph.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, same extent as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // empty for leaves

  int numel() const { return static_cast<int>(value.size()); }
  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

// Value-semantics handle to a shared autodiff node. Copies alias the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor from(const Shape& shape, std::vector<double> data);
  static Tensor scalar(double v);
  // leaf with gradient tracking (parameters, grad-checked inputs)
  static Tensor param(const Shape& shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const { return shape()[static_cast<size_t>(i)]; }
  int numel() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool on);
  const std::vector<double>& grad() const;  // throws if no grad buffer
  bool has_grad() const;
  void zero_grad();

  // Reverse-mode sweep from a scalar root; accumulates into leaf grads.
  void backward() const;

  // deep copy of values as a fresh leaf (no graph links)
  Tensor clone_detached(bool requires_grad = false) const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> n);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Builds an op result node. `backward` may be empty for non-differentiable
// ops; it is dropped entirely when no parent needs gradients.
Tensor make_result(Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& parents,
                   std::function<void()> backward);

[[noreturn]] void op_shape_error(const std::string& op, const Shape& a, const Shape& b);

}  // namespace comg
