#pragma once

#include <functional>
#include <vector>

#include "ocrcap/tensor.hpp"

namespace ocrcap {

// Compares reverse-mode gradients with central finite differences.
//
// Returns max over all coordinates of |analytic - numeric| / max(1, |numeric|).
// `f` must rebuild its graph on every call from the current values of the
// checked tensors and return a single-element tensor. The checked tensors must
// be leaves with requires_grad set; their values are restored afterwards.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double step = 1e-5);

// Single-input form: f(x).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step = 1e-5);

}  // namespace ocrcap
