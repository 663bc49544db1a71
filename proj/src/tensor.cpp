#include "iprompt/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "iprompt/errors.hpp"

namespace iprompt {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_data(shape, std::vector<double>(numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  return from_data(shape, std::vector<double>(numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
  }
  if (numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->leaf = true;
  node->needs_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int Tensor::dim(int axis) const { return node_->shape.at(axis); }
std::size_t Tensor::size() const { return node_->data.size(); }

std::vector<double>& Tensor::data() { return node_->data; }
const std::vector<double>& Tensor::data() const { return node_->data; }

std::vector<double>& Tensor::grad() {
  if (!node_->needs_grad) throw UsageError("tensor has no gradient buffer");
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->needs_grad) throw UsageError("tensor has no gradient buffer");
  return node_->grad;
}

bool Tensor::requires_grad() const { return node_->needs_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!node_->leaf) throw UsageError("requires_grad can only be toggled on leaf tensors");
  node_->needs_grad = value;
  if (value) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  if (node_->needs_grad) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::value() const {
  if (size() != 1) throw UsageError("value() requires a scalar tensor, got " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (idx.size() != node_->shape.size()) {
    throw DimensionError("index rank mismatch");
  }
  std::size_t flat = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= node_->shape[axis]) throw DimensionError("index out of range");
    flat = flat * static_cast<std::size_t>(node_->shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return node_->data[flat];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(node_->shape, node_->data, requires_grad);
}

Tensor Tensor::make_op(std::vector<int> shape, std::vector<double> data,
                       std::vector<NodePtr> parents,
                       std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->needs_grad);
  }
  node->needs_grad = needs;
  if (needs) {
    node->grad.assign(node->data.size(), 0.0);
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() {
  if (!defined()) throw UsageError("backward() on undefined tensor");
  if (size() != 1) throw UsageError("backward() requires a scalar root");
  if (!node_->needs_grad) return;

  // Iterative post-order DFS; order is fixed by construction order, which
  // keeps gradient accumulation deterministic.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next].get();
      ++next;
      if (p && p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace iprompt
