#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "wscl/core.hpp"

namespace wscl::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,       // elementwise
  MatMul,
  Tanh,
  Relu,
  Sigmoid,
  Square,
  Abs,
  Log,
  Clamp,     // constant bounds
  Sum,
  Mean,
  Concat,    // last axis
  Scale,     // scale-by-constant
  AddBias,   // [n,m] + [m]
};

const char* op_name(Op op);

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

struct Node {
  Op op = Op::Leaf;
  Shape shape;
  core::Vec value;
  core::Vec grad;  // sized on first accumulation
  // Snapshot taken at construction: whether d(root)/d(this) is propagated.
  bool requires_grad = false;
  std::array<std::size_t, 2> parents{kNoParent, kNoParent};
  double c0 = 0.0;  // Scale factor / Clamp lower bound
  double c1 = 0.0;  // Clamp upper bound
};

class Graph;

/// Lightweight handle into a Graph node. Valid while the graph lives.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;  // 2-D convenience
  std::size_t cols() const;
  const core::Vec& value() const;
  /// Accumulated gradient; zeros if backward never reached this node.
  core::Vec grad() const;
  bool requires_grad() const;
  double scalar() const;  // requires size() == 1

 private:
  friend class Graph;
  Tensor(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operation records. Node ids increase in creation order, so
/// descending id order is a reverse topological order. Single-threaded;
/// independent graphs on independent threads do not interact.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor leaf(Shape shape, core::Vec value, bool requires_grad);
  Tensor constant(Shape shape, core::Vec value) { return leaf(std::move(shape), std::move(value), false); }
  Tensor constant(const core::Mat& m);
  Tensor constant_scalar(double v) { return constant({1}, {v}); }

  /// Accumulates d(root)/d(node) into every requires-grad ancestor.
  /// Repeated calls keep accumulating; zero_grad() resets.
  void backward(const Tensor& root);
  void zero_grad();

  std::size_t node_count() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  Tensor emit(Node&& n);

 private:
  std::vector<Node> nodes_;
};

// Primitives. Two-input ops require both tensors on the same graph.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Common reductions used by the losses.
/// mean over rows of the L1 norm of each row.
Tensor mean_l1_rows(const Tensor& x);
/// mean over rows of the squared L2 norm of each row.
Tensor mean_sq_l2_rows(const Tensor& x);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  std::vector<std::size_t> skipped;    // kink-flagged coordinates (excluded from max)
  std::vector<std::size_t> nonfinite;  // coordinates with a non-finite probe value
  bool pass(double tol) const { return nonfinite.empty() && max_rel_err <= tol; }
};

/// Central-difference check of a scalar function built from primitives.
/// f receives a fresh graph and the parameter leaf; returns the scalar output.
/// Relative error per coordinate: |analytic - central| / max(1, |central|).
/// Coordinates where the one-sided differences disagree (kinks) are
/// skip-listed rather than counted as failures.
GradCheckReport grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f,
                           const core::Vec& x, double eps = 1e-5);

}  // namespace wscl::ad
