#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace iprompt {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the dynamically built computation graph. `grad` is allocated
// iff the node participates in gradient flow; `backward_fn` reads the node's
// own grad and accumulates into its parents' grads.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool needs_grad = false;
  bool leaf = true;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;
};

// Suspends gradient tracking for read-only passes (evaluation, oracles).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Value-semantic handle to a graph node. Data is 64-bit floats, row-major.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::size_t size() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);  // leaf tensors only
  void zero_grad();

  double value() const;  // scalar tensors
  double at(std::initializer_list<int> idx) const;

  // Reverse-mode accumulation from a scalar root.
  void backward();

  // Deep copy of the data into a fresh leaf.
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  TensorNode* node() const { return node_.get(); }
  NodePtr handle() const { return node_; }

  // Wraps an op result; needs_grad is derived from the parents and the
  // current grad mode.
  static Tensor make_op(std::vector<int> shape, std::vector<double> data,
                        std::vector<NodePtr> parents,
                        std::function<void(TensorNode&)> backward_fn);

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

std::size_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool all_finite(const Tensor& t);

}  // namespace iprompt
