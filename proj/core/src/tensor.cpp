#include "ocrcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "node.hpp"
#include "ocrcap/error.hpp"

namespace ocrcap {

using detail::Access;
using detail::Node;

namespace {
thread_local int no_grad_depth = 0;

Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *Access::node(t);
}
}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).data.size(); }

std::span<const double> Tensor::values() const { return node_of(*this).data; }

std::span<double> Tensor::mutable_values() {
  Node& n = node_of(*this);
  if (n.backward_fn) throw ContractError("mutable_values() on a non-leaf tensor");
  return n.data;
}

std::vector<double> Tensor::to_vector() const { return node_of(*this).data; }

double Tensor::item() const {
  const Node& n = node_of(*this);
  if (n.data.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(n.shape));
  }
  return n.data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const Node& n = node_of(*this);
  if (n.shape.size() != 2 || r >= n.shape[0] || c >= n.shape[1]) {
    throw DimensionError("at(" + std::to_string(r) + ", " + std::to_string(c) +
                         ") invalid for shape " + shape_str(n.shape));
  }
  return n.data[r * n.shape[1] + c];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  Node& n = node_of(*this);
  if (n.backward_fn) throw ContractError("set_requires_grad() on a non-leaf tensor");
  n.requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !node_of(*this).backward_fn; }

bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }

std::span<const double> Tensor::grad() const {
  const Node& n = node_of(*this);
  if (n.grad.empty()) throw ContractError("tensor has no gradient; call backward() first");
  return n.grad;
}

void Tensor::zero_grad() { node_of(*this).grad.clear(); }

bool Tensor::all_finite() const {
  const auto& d = node_of(*this).data;
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::detach() const { return from(shape(), to_vector(), false); }

Graph Graph::trace(const Tensor& root) {
  Graph graph;
  if (!root.defined()) return graph;
  // Iterative post-order DFS so long recurrent chains do not overflow the stack.
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(Access::node(root), 0);
  visited.insert(stack.back().first.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      const auto& parent = node->parents[next_parent++];
      if (visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
      continue;
    }
    graph.nodes_.push_back(Access::wrap(node));
    stack.pop_back();
  }
  return graph;
}

bool Graph::topologically_ordered() const {
  std::unordered_set<const Node*> seen;
  for (const Tensor& t : nodes_) {
    for (const auto& parent : Access::node(t)->parents) {
      if (!seen.count(parent.get())) return false;
    }
    seen.insert(t.node());
  }
  return true;
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const Tensor& t : nodes_) names.emplace_back(t.node()->op);
  return names;
}

void Tensor::backward() const {
  Node& root = node_of(*this);
  if (root.data.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw ContractError("backward() on a tensor that does not require grad");
  const Graph graph = Graph::trace(*this);
  root.ensure_grad()[0] += 1.0;
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& n = *Access::node(*it);
    if (n.backward_fn && !n.grad.empty()) n.backward_fn(n);
  }
}

}  // namespace ocrcap
