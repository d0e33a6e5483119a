#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ocvit {

class Tensor;

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily by backward()
  bool requires_grad = false;
  std::vector<Tensor> parents;
  // Scatters this node's grad into its parents' grads.
  std::function<void(const TensorNode&)> backward_fn;
};

}  // namespace detail

bool grad_enabled();

/// Disables graph recording while alive (scoring / evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major tensor of doubles with an optional gradient buffer.
/// Tensor is a handle: copies alias the same storage, clone() deep-copies.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  // Handle semantics: a const Tensor still aliases mutable storage, the way
  // a const shared_ptr does.
  std::span<double> data() const { return node_->value; }
  double item() const;

  double& at(std::size_t i) const { return node_->value[i]; }
  double& at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool rg);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<double> grad() const { return node_->grad; }
  void ensure_grad();
  void zero_grad();

  /// Deep copy of the values; drops any recorded graph and gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  bool all_finite() const;

  std::string shape_str() const;

  detail::TensorNode* node() const { return node_.get(); }

 private:
  friend Tensor make_tracked(std::vector<std::size_t>, std::vector<double>,
                             std::vector<Tensor>,
                             std::function<void(const detail::TensorNode&)>);
  std::shared_ptr<detail::TensorNode> node_;
};

/// Creates an op output, recording parents and a backward function only when
/// grad mode is on and some parent requires grad.
Tensor make_tracked(std::vector<std::size_t> shape, std::vector<double> value,
                    std::vector<Tensor> parents,
                    std::function<void(const detail::TensorNode&)> backward_fn);

/// Reverse-mode sweep from a scalar loss; accumulates into requires-grad
/// tensors reachable through the recorded graph.
void backward(const Tensor& loss);

std::string shape_to_string(std::span<const std::size_t> shape);
std::size_t shape_product(std::span<const std::size_t> shape);

}  // namespace ocvit
