#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "textnn/errors.hpp"
#include "textnn/rng.hpp"

namespace textnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

// One vertex of the recorded computation graph. Leaves have no parents;
// interior nodes carry a closure that scatters this node's grad into the
// parents' grad buffers. The graph is rebuilt on every forward pass.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward touches this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-dimensional double tensor with an associated gradient slot.
// Copies share the underlying node (shallow handle semantics), which is what
// lets a parameter appear both in a ModelParams map and inside a forward
// graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> data) {
    validate_shape(shape);
    if (shape_numel(shape) != data.size())
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return Tensor(std::move(node));
  }

  static Tensor zeros(const Shape& shape) {
    validate_shape(shape);
    return leaf(shape, std::vector<double>(shape_numel(shape), 0.0));
  }

  static Tensor full(const Shape& shape, double v) {
    validate_shape(shape);
    return leaf(shape, std::vector<double>(shape_numel(shape), v));
  }

  static Tensor scalar(double v) { return leaf({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->numel(); }
  bool is_scalar() const { return numel() == 1; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& value_mut() { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient; run backward first");
    return node_->grad;
  }
  std::vector<double>& grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) node_->grad.assign(node_->grad.size(), 0.0);
  }

  double item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  // Row-major element access for tests and small utilities.
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t i, std::size_t j) const { return node_->value[i * dim(1) + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return node_->value[(i * dim(1) + j) * dim(2) + k];
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static void validate_shape(const Shape& shape) {
    for (std::size_t e : shape)
      if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Interior-node factory used by every differentiable op.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->parents.reserve(parents.size());
  for (const Tensor& p : parents) node->parents.push_back(p.node());
  node->backprop = std::move(backprop);
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

// --- matrix product -------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    const auto& g = node.grad;
    // dL/da = g . b^T ; dL/db = a^T . g
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.value[p * n + j];
        pa.grad[i * k + p] += acc;
      }
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += pa.value[i * k + p] * g[i * n + j];
        pb.grad[p * n + j] += acc;
      }
  });
}

// --- pointwise binary ops -------------------------------------------------

enum class EwOp { Add, Sub, Mul, Max };

// Equal shapes, or scalar-with-tensor (the only broadcast supported).
inline Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.is_scalar(), b_scalar = b.is_scalar();
  if (a.shape() != b.shape() && !a_scalar && !b_scalar)
    throw DimensionError("elementwise: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    switch (op) {
      case EwOp::Add: out[i] = x + y; break;
      case EwOp::Sub: out[i] = x - y; break;
      case EwOp::Mul: out[i] = x * y; break;
      case EwOp::Max: out[i] = x >= y ? x : y; break;  // ties go to the first operand
    }
  }
  return detail::make_op(out_shape, std::move(out), {a, b},
                         [op, n, a_scalar, b_scalar](detail::Node& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = node.grad[i];
      const std::size_t ia = a_scalar ? 0 : i;
      const std::size_t ib = b_scalar ? 0 : i;
      switch (op) {
        case EwOp::Add:
          pa.grad[ia] += g;
          pb.grad[ib] += g;
          break;
        case EwOp::Sub:
          pa.grad[ia] += g;
          pb.grad[ib] -= g;
          break;
        case EwOp::Mul:
          pa.grad[ia] += g * pb.value[ib];
          pb.grad[ib] += g * pa.value[ia];
          break;
        case EwOp::Max:
          if (pa.value[ia] >= pb.value[ib])
            pa.grad[ia] += g;
          else
            pb.grad[ib] += g;
          break;
      }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Mul, a, b); }
inline Tensor max(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Max, a, b); }

inline Tensor scale(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }

// --- reductions -----------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  return detail::make_op({1}, {acc}, {a}, [](detail::Node& node) {
    const double g = node.grad[0];
    auto& p = *node.parents[0];
    for (double& slot : p.grad) slot += g;
  });
}

inline Tensor sum_squares(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.value()) acc += v * v;
  return detail::make_op({1}, {acc}, {a}, [](detail::Node& node) {
    const double g = node.grad[0];
    auto& p = *node.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += 2.0 * p.value[i] * g;
  });
}

// --- reverse pass ---------------------------------------------------------

// Seeds d(loss)/d(loss)=1 and propagates through the recorded graph.
// Interior grads are rebuilt from zero on every call; leaf grads accumulate,
// so two calls without zero_grad() yield exactly twice the gradient.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw ContractError("backward: loss must be a scalar tensor");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      detail::Node* child = node->parents[next_child++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->parents.empty()) {
      node->ensure_grad();  // leaves keep accumulating across calls
    } else {
      node->grad.assign(node->value.size(), 0.0);
    }
  }
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

// --- seeded initialization ------------------------------------------------

inline Tensor init_zeros(const Shape& shape) { return Tensor::zeros(shape); }

inline Tensor init_ones(const Shape& shape) { return Tensor::full(shape, 1.0); }

inline Tensor init_uniform(const Shape& shape, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw ContractError("init_uniform: requires lo < hi");
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::leaf(shape, std::move(data));
}

inline Tensor init_truncated_normal(const Shape& shape, double sigma, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.truncated_normal(sigma);
  return Tensor::leaf(shape, std::move(data));
}

}  // namespace textnn
