#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gazemoe/error.hpp"
#include "gazemoe/rng.hpp"

namespace gazemoe {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds d(loss)/d(parent) contributions into parents' grad buffers.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

struct BackwardStats {
  std::size_t nodes_visited = 0;
};

/// Dense row-major float64 tensor participating in a reverse-mode tape.
///
/// A Tensor is a handle to a graph node; copies alias the same node. Leaf
/// tensors created with requires_grad accumulate gradients across backward
/// calls until zero_grad(). Interior nodes are rebuilt by every forward pass.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  /// Mutable access for leaves (parameter updates, finite differences).
  std::span<double> mutable_data();

  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  /// Seeds d(self)/d(self)=1 and propagates to every reachable node once,
  /// in reverse topological order. Requires a single-element tensor.
  BackwardStats backward() const;

  /// New leaf with the same values and no history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// 1 - a
Tensor one_minus(const Tensor& a);
/// a^exponent for a >= 0. Derivative at a == 0 is taken as 0 when exponent ≤ 1.
Tensor pow_scalar(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor log(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Exact GeLU: 0.5·x·(1 + erf(x/√2)).
Tensor gelu(const Tensor& a);

// ---- broadcasting over a 2-D [m×n] operand --------------------------------

/// a[i,j] + row[j]; row has n elements.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a[i,j] * row[j]
Tensor mul_row(const Tensor& a, const Tensor& row);
/// a[i,j] * w[i]; w has m elements.
Tensor scale_rows(const Tensor& a, const Tensor& w);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column means of a 2-D tensor → [1×n].
Tensor mean_rows(const Tensor& a);

// ---- normalization / regularization ---------------------------------------

/// Softmax along `axis`, stabilized by max subtraction.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes the last axis; constant rows map to beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// ---- indexing -------------------------------------------------------------

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Rows `idx` of a 2-D tensor, in order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);
/// Places src rows at rows `idx` of a zero [rows×n] tensor (duplicates add).
Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> idx, std::size_t rows);
/// Flat elements of `a` at `idx` as an [idx.size()×1] column.
Tensor gather_elements(const Tensor& a, std::span<const std::size_t> idx);

}  // namespace gazemoe
