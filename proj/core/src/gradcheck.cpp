#include "ocrcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ocrcap/error.hpp"

namespace ocrcap {

namespace {
double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const Tensor out = f();
  if (out.numel() != 1) {
    throw ContractError("grad_check: function is not scalar-valued (shape " + shape_str(out.shape()) + ")");
  }
  return out.item();
}
}  // namespace

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double step) {
  for (Tensor& x : inputs) {
    if (!x.is_leaf() || !x.requires_grad()) {
      throw ContractError("grad_check: inputs must be leaves with requires_grad set");
    }
    x.zero_grad();
  }
  const Tensor out = f();
  if (out.numel() != 1) {
    throw ContractError("grad_check: function is not scalar-valued (shape " + shape_str(out.shape()) + ")");
  }
  out.backward();

  double worst = 0.0;
  for (Tensor& x : inputs) {
    // An input the output does not depend on has an all-zero analytic gradient.
    const std::vector<double> analytic =
        x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                     : std::vector<double>(x.numel(), 0.0);
    auto values = x.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = evaluate(f);
      values[i] = saved - step;
      const double minus = evaluate(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    x.zero_grad();
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step) {
  return grad_check([&f, &x]() { return f(x); }, std::vector<Tensor>{x}, step);
}

}  // namespace ocrcap
