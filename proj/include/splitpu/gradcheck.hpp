#pragma once

// Central finite differences, used as the independent oracle for every
// analytic gradient in the library.

#include <functional>
#include <span>
#include <vector>

#include "splitpu/autodiff.hpp"

namespace splitpu::ad {

using ScalarFn = std::function<double(std::span<const double>)>;
/// Builds a scalar graph from one input tensor of the given shape.
using GraphFn = std::function<Tensor(const Tensor&)>;

/// (fn(x + eps*e_i) - fn(x - eps*e_i)) / (2*eps) for every coordinate i.
std::vector<double> finite_diff_grad(const ScalarFn& fn, std::span<const double> at, double eps);
std::vector<double> finite_diff_grad(const GraphFn& fn, const Shape& shape, std::span<const double> at,
                                     double eps);

/// Gradient of fn at `at` through backward().
std::vector<double> analytic_grad(const GraphFn& fn, const Shape& shape, std::span<const double> at);

struct GradCheckResult {
    std::vector<double> analytic;
    std::vector<double> numeric;
    /// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor)
    double relative_error = 0.0;
};

GradCheckResult check_gradient(const GraphFn& fn, const Shape& shape, std::span<const double> at,
                               double eps = 1e-6, double floor = 1e-8);

}  // namespace splitpu::ad
