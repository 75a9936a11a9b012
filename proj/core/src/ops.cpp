#include <algorithm>
#include <cmath>
#include <limits>

#include "node.hpp"
#include "ocrcap/error.hpp"
#include "ocrcap/tensor.hpp"

namespace ocrcap {

using detail::Access;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

const NodePtr& N(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return Access::node(t);
}

// Builds the result node; records the graph edge only if some input needs it.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track = grad_enabled() &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward);
  }
  return Access::wrap(std::move(node));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

// Splits a shape around axis into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const auto& A = N(a)->data;
  const auto& B = N(b)->data;
  std::vector<double> C(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  NodePtr pa = N(a), pb = N(b);
  return make_result("matmul", {m, n}, std::move(C), {pa, pb}, [pa, pb, m, k, n](Node& self) {
    const auto& G = self.grad;
    if (pa->requires_grad) {
      auto& dA = pa->ensure_grad();
      const auto& B = pb->data;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (pb->requires_grad) {
      auto& dB = pb->ensure_grad();
      const auto& A = pa->data;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto& A = N(a)->data;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  NodePtr pa = N(a);
  return make_result("transpose", {c, r}, std::move(out), {pa}, [pa, r, c](Node& self) {
    auto& dA = pa->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dA[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto& A = N(a)->data;
  const auto& B = N(b)->data;
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  NodePtr pa = N(a), pb = N(b);
  return make_result("add", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    for (const NodePtr& p : {pa, pb}) {
      if (!p->requires_grad) continue;
      auto& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto& A = N(a)->data;
  const auto& B = N(b)->data;
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  NodePtr pa = N(a), pb = N(b);
  return make_result("sub", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& d = pa->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& d = pb->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
    }
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  const auto& A = N(a)->data;
  const auto& B = N(b)->data;
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  NodePtr pa = N(a), pb = N(b);
  return make_result("hadamard", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& d = pa->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      auto& d = pb->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2("add_bias", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                         shape_str(x.shape()));
  }
  const auto& X = N(x)->data;
  const auto& B = N(bias)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = X[i * cols + j] + B[j];
  NodePtr px = N(x), pb = N(bias);
  return make_result("add_bias", x.shape(), std::move(out), {px, pb}, [px, pb, rows, cols](Node& self) {
    if (px->requires_grad) {
      auto& d = px->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& d = pb->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) d[j] += self.grad[i * cols + j];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] * factor;
  NodePtr px = N(x);
  return make_result("scale", x.shape(), std::move(out), {px}, [px, factor](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] + offset;
  NodePtr px = N(x);
  return make_result("add_scalar", x.shape(), std::move(out), {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor mul_scalar(const Tensor& s, const Tensor& x) {
  if (s.numel() != 1) {
    throw DimensionError("mul_scalar: expected a single-element factor, got " + shape_str(s.shape()));
  }
  const double k = N(s)->data[0];
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = k * X[i];
  NodePtr ps = N(s), px = N(x);
  return make_result("mul_scalar", x.shape(), std::move(out), {ps, px}, [ps, px](Node& self) {
    if (ps->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->data[i];
      ps->ensure_grad()[0] += acc;
    }
    if (px->requires_grad) {
      auto& d = px->ensure_grad();
      const double k = ps->data[0];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * k;
    }
  });
}

Tensor reciprocal(const Tensor& x) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = 1.0 / X[i];
  NodePtr px = N(x);
  return make_result("reciprocal", x.shape(), std::move(out), {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i] * self.data[i] * self.data[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  // Clamped to the open interval so saturated inputs still satisfy 0 < y < 1.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double v = X[i];
    double y;
    if (v >= 0.0) {
      y = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y = e / (1.0 + e);
    }
    out[i] = std::clamp(y, lo, hi);
  }
  NodePtr px = N(x);
  return make_result("sigmoid", x.shape(), std::move(out), {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = self.data[i];
      d[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& x) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::tanh(X[i]);
  NodePtr px = N(x);
  return make_result("tanh", x.shape(), std::move(out), {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = self.data[i];
      d[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor log(const Tensor& x) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::log(X[i]);
  NodePtr px = N(x);
  return make_result("log", x.shape(), std::move(out), {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] / px->data[i];
  });
}

Tensor clamp_min(const Tensor& x, double floor) {
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::max(X[i], floor);
  NodePtr px = N(x);
  return make_result("clamp_min", x.shape(), std::move(out), {px}, [px, floor](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (px->data[i] >= floor) d[i] += self.grad[i];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  const auto& X = N(x)->data;
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, X[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(X[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  NodePtr px = N(x);
  return make_result("softmax", x.shape(), std::move(out), {px}, [px, s](Node& self) {
    auto& d = px->ensure_grad();
    const auto& Y = self.data;
    const auto& G = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          dot += G[i] * Y[i];
        }
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          d[i] += Y[i] * (G[i] - dot);
        }
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto& X = N(x)->data;
  double total = 0.0;
  for (double v : X) total += v;
  NodePtr px = N(x);
  return make_result("sum", {1}, {total}, {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    const double g = self.grad[0];
    for (double& v : d) v += g;
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("sum", x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const auto& X = N(x)->data;
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.extent; ++k)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += X[(o * s.extent + k) * s.inner + in];
  NodePtr px = N(x);
  return make_result("sum_axis", std::move(out_shape), std::move(out), {px}, [px, s](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.extent; ++k)
        for (std::size_t in = 0; in < s.inner; ++in)
          d[(o * s.extent + k) * s.inner + in] += self.grad[o * s.inner + in];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  split_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool compatible = s.size() == first.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) compatible = false;
    }
    if (!compatible) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_axis("concat", out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<NodePtr> parents;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const auto& D = N(p)->data;
    for (std::size_t o = 0; o < whole.outer; ++o)
      for (std::size_t k = 0; k < ext; ++k)
        std::copy_n(&D[(o * ext + k) * whole.inner], whole.inner,
                    &out[(o * whole.extent + offset + k) * whole.inner]);
    parents.push_back(N(p));
    offsets.push_back(offset);
    offset += ext;
  }
  return make_result("concat", out_shape, std::move(out), parents,
                     [parents, offsets, whole, axis](Node& self) {
                       for (std::size_t pi = 0; pi < parents.size(); ++pi) {
                         const NodePtr& p = parents[pi];
                         if (!p->requires_grad) continue;
                         auto& d = p->ensure_grad();
                         const std::size_t ext = p->shape[axis];
                         for (std::size_t o = 0; o < whole.outer; ++o)
                           for (std::size_t k = 0; k < ext; ++k)
                             for (std::size_t in = 0; in < whole.inner; ++in)
                               d[(o * ext + k) * whole.inner + in] +=
                                   self.grad[(o * whole.extent + offsets[pi] + k) * whole.inner + in];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis("slice", x.shape(), axis);
  if (begin >= end || end > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const std::size_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  const auto& X = N(x)->data;
  std::vector<double> out(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      std::copy_n(&X[(o * s.extent + begin + k) * s.inner], s.inner, &out[(o * len + k) * s.inner]);
  NodePtr px = N(x);
  return make_result("slice", std::move(out_shape), std::move(out), {px}, [px, s, begin, len](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < len; ++k)
        for (std::size_t in = 0; in < s.inner; ++in)
          d[(o * s.extent + begin + k) * s.inner + in] += self.grad[(o * len + k) * s.inner + in];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel() || shape.empty()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  NodePtr px = N(x);
  return make_result("reshape", std::move(shape), px->data, {px}, [px](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2("gather_rows", table);
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  const auto& T = N(table)->data;
  std::vector<double> out(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[i]) + " out of range for " +
                           shape_str(table.shape()));
    }
    std::copy_n(&T[ids[i] * cols], cols, &out[i * cols]);
  }
  NodePtr pt = N(table);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_result("gather_rows", {ids.size(), cols}, std::move(out), {pt}, [pt, idx, cols](Node& self) {
    auto& d = pt->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) d[idx[i] * cols + j] += self.grad[i * cols + j];
  });
}

Tensor scatter_add(const Tensor& x, std::span<const std::size_t> ids, std::size_t size) {
  if (ids.size() != x.numel()) {
    throw DimensionError("scatter_add: " + std::to_string(ids.size()) + " indices for tensor " +
                         shape_str(x.shape()));
  }
  if (size == 0) throw DimensionError("scatter_add: empty output");
  const auto& X = N(x)->data;
  std::vector<double> out(size, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size) {
      throw DimensionError("scatter_add: index " + std::to_string(ids[i]) + " out of range " +
                           std::to_string(size));
    }
    out[ids[i]] += X[i];
  }
  NodePtr px = N(x);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_result("scatter_add", {1, size}, std::move(out), {px}, [px, idx](Node& self) {
    auto& d = px->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) d[i] += self.grad[idx[i]];
  });
}

Tensor pick(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.numel()) {
    throw DimensionError("pick: index " + std::to_string(flat_index) + " out of range for " +
                         shape_str(x.shape()));
  }
  NodePtr px = N(x);
  return make_result("pick", {1}, {px->data[flat_index]}, {px}, [px, flat_index](Node& self) {
    px->ensure_grad()[flat_index] += self.grad[0];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2("layer_norm", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (gain.numel() != cols || bias.numel() != cols) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not fit " + shape_str(x.shape()));
  }
  const auto& X = N(x)->data;
  const auto& G = N(gain)->data;
  const auto& B = N(bias)->data;
  std::vector<double> out(X.size()), normed(X.size()), inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = &X[i * cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(cols);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mean) * inv_std[i];
      normed[i * cols + j] = h;
      out[i * cols + j] = G[j] * h + B[j];
    }
  }
  NodePtr px = N(x), pg = N(gain), pb = N(bias);
  return make_result(
      "layer_norm", x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, rows, cols, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
        const auto& dY = self.grad;
        if (pg->requires_grad || pb->requires_grad) {
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              if (pg->requires_grad) pg->ensure_grad()[j] += dY[i * cols + j] * normed[i * cols + j];
              if (pb->requires_grad) pb->ensure_grad()[j] += dY[i * cols + j];
            }
          }
        }
        if (px->requires_grad) {
          auto& dX = px->ensure_grad();
          const auto& Gv = pg->data;
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double dh = dY[i * cols + j] * Gv[j];
              mean_dh += dh;
              mean_dh_h += dh * normed[i * cols + j];
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            for (std::size_t j = 0; j < cols; ++j) {
              const double dh = dY[i * cols + j] * Gv[j];
              dX[i * cols + j] += inv_std[i] * (dh - mean_dh - normed[i * cols + j] * mean_dh_h);
            }
          }
        }
      });
}

}  // namespace ocrcap
