#include "ocvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "ocvit/errors.hpp"

namespace ocvit {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : node_(std::make_shared<detail::TensorNode>()) {
  node_->shape = std::move(shape);
  node_->value.assign(shape_product(node_->shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) +
                     " does not match data length " +
                     std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows(): tensor is not 2-D, shape " + shape_str());
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols(): tensor is not 2-D, shape " + shape_str());
  return node_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item(): tensor has " + std::to_string(size()) +
                     " elements");
  }
  return node_->value[0];
}

double& Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

Tensor& Tensor::set_requires_grad(bool rg) {
  node_->requires_grad = rg;
  return *this;
}

void Tensor::ensure_grad() {
  if (node_->grad.size() != node_->value.size()) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->value);
}

bool Tensor::all_finite() const {
  return std::all_of(node_->value.begin(), node_->value.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const { return shape_to_string(node_->shape); }

Tensor make_tracked(std::vector<std::size_t> shape, std::vector<double> value,
                    std::vector<Tensor> parents,
                    std::function<void(const detail::TensorNode&)> backward_fn) {
  Tensor out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool track = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!track) return out;
  out.node_->requires_grad = true;
  out.node_->parents = std::move(parents);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + loss.shape_str());
  }
  if (!loss.node()->requires_grad) return;
  // Iterative post-order topological sort over the parent graph.
  std::vector<detail::TensorNode*> topo;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (loss.node()->requires_grad) stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].node();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }
  for (detail::TensorNode* n : topo) {
    n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace ocvit
