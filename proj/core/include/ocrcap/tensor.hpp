#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ocrcap {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
struct Access;
}

// Dense row-major float64 tensor with reverse-mode differentiation.
//
// A Tensor is a cheap handle; copies share the same storage and graph node.
// Operations on tensors that require gradients record their inputs and a
// backward rule (define-by-run), so the graph is rebuilt on every forward
// pass. Leaves created with requires_grad=true accumulate gradients across
// backward() calls until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Shape {1, n}.
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable storage; only valid on leaves (parameters, inputs).
  std::span<double> mutable_values();
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and propagates to every tensor reachable
  // through recorded operations. Requires numel() == 1.
  void backward() const;

  bool all_finite() const;
  // Same values, no graph history.
  Tensor detach() const;

  const detail::Node* node() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Access;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Operations recorded during one forward pass, in topological order: every
// operation appears after all of its inputs.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  const std::vector<Tensor>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool topologically_ordered() const;
  // Op name per node ("leaf" for inputs/parameters).
  std::vector<std::string> op_names() const;

 private:
  std::vector<Tensor> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. All are differentiable in every tensor argument unless noted.
// Shapes are never broadcast implicitly; the only mixed-shape products are
// scalar-by-tensor (mul_scalar) and row-bias addition (add_bias).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
// x: {n, m}; bias: m elements, added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// s must hold exactly one element.
Tensor mul_scalar(const Tensor& s, const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
// max(x, floor); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& x, double floor);
// Max-stabilized softmax along axis.
Tensor softmax(const Tensor& x, std::size_t axis);
// Sum of all elements, shape {1}.
Tensor sum(const Tensor& x);
// Sum along axis; the reduced axis is kept with extent 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
// Embedding lookup: rows of table {V, d} selected by ids, result {ids.size(), d}.
// Differentiable in table; the indices carry no gradient.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// out[0, ids[i]] += x[i]; result {1, size}. Indices carry no gradient.
Tensor scatter_add(const Tensor& x, std::span<const std::size_t> ids, std::size_t size);
// Single element by flat index, shape {1}.
Tensor pick(const Tensor& x, std::size_t flat_index);
// Row-wise layer normalization of x {n, m} with gain/bias of m elements.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

}  // namespace ocrcap
