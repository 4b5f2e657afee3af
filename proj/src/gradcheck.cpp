#include "splitpu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splitpu::ad {

std::vector<double> finite_diff_grad(const ScalarFn& fn, std::span<const double> at, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    std::vector<double> x(at.begin(), at.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double hi = fn(x);
        x[i] = orig - eps;
        const double lo = fn(x);
        x[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

std::vector<double> finite_diff_grad(const GraphFn& fn, const Shape& shape, std::span<const double> at,
                                     double eps) {
    return finite_diff_grad(
        [&](std::span<const double> x) {
            NoGradGuard guard;
            return fn(Tensor::constant(shape, {x.begin(), x.end()})).item();
        },
        at, eps);
}

std::vector<double> analytic_grad(const GraphFn& fn, const Shape& shape, std::span<const double> at) {
    Tensor x = Tensor::parameter(shape, {at.begin(), at.end()});
    backward(fn(x));
    return {x.grad().begin(), x.grad().end()};
}

GradCheckResult check_gradient(const GraphFn& fn, const Shape& shape, std::span<const double> at, double eps,
                               double floor) {
    GradCheckResult r;
    r.analytic = analytic_grad(fn, shape, at);
    r.numeric = finite_diff_grad(fn, shape, at, eps);
    double diff = 0.0, scale = floor;
    for (std::size_t i = 0; i < r.analytic.size(); ++i) {
        diff = std::max(diff, std::abs(r.analytic[i] - r.numeric[i]));
        scale = std::max({scale, std::abs(r.analytic[i]), std::abs(r.numeric[i])});
    }
    r.relative_error = diff / scale;
    return r;
}

}  // namespace splitpu::ad
