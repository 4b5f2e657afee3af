#include "splitpu/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace splitpu::ad {

namespace {

thread_local bool g_no_grad = false;

using NodePtr = std::shared_ptr<DiffNode>;
using BackwardFn = std::function<void(DiffNode&)>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape()));
    }
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn fn) {
    auto node = std::make_shared<DiffNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->grad.assign(node->data.size(), 0.0);
    node->is_leaf = false;
    node->op = op;
    bool needs = false;
    if (!g_no_grad) {
        for (const auto& t : inputs) needs = needs || t.requires_grad();
    }
    node->requires_grad = needs;
    if (needs) {
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.ptr());
        node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

// Row view for row-wise ops: rank-1 is one row, rank>=2 is shape[0] rows.
struct RowLayout {
    std::size_t rows;
    std::size_t cols;
    Shape out_shape;
};

RowLayout row_layout(const char* op, const Shape& s) {
    if (s.empty()) throw ShapeError(std::string(op) + ": scalar input has no rows");
    if (s.size() == 1) return {1, s[0], Shape{}};
    return {s[0], numel(s) / s[0], Shape{s[0]}};
}

template <typename F>
Tensor unary(const Tensor& a, const char* op, F&& forward, BackwardFn fn) {
    std::vector<double> out(a.size());
    const auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
    return make_result(a.shape(), std::move(out), {a}, op, std::move(fn));
}

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size()) {
        throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                         to_string(shape));
    }
    auto node = std::make_shared<DiffNode>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->grad.assign(node->data.size(), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    t.node_->op = "parameter";
    return t;
}

Tensor Tensor::scalar(double value) { return constant(Shape{}, {value}); }

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
    return node_->data[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result(a.shape(), std::move(out), {a, b}, "add", [](DiffNode& n) {
        for (auto& in : n.inputs) {
            if (!in->requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make_result(a.shape(), std::move(out), {a, b}, "sub", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        auto& y = *n.inputs[1];
        if (x.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
        if (y.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) y.grad[i] -= n.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make_result(a.shape(), std::move(out), {a, b}, "mul", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        auto& y = *n.inputs[1];
        if (x.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] * y.data[i];
        if (y.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) y.grad[i] += n.grad[i] * x.data[i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    return make_result(a.shape(), std::move(out), {a, b}, "div", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        auto& y = *n.inputs[1];
        if (x.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] / y.data[i];
        if (y.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                y.grad[i] -= n.grad[i] * n.data[i] / y.data[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    return unary(a, "scale", [c](double x) { return c * x; }, [c](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += c * n.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary(a, "add_scalar", [c](double x) { return x + c; }, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
    });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] * n.data[i];
    });
}

Tensor log(const Tensor& a) {
    return unary(a, "log", [](double x) { return std::log(std::max(x, kLogFloor)); }, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (x.data[i] >= kLogFloor) x.grad[i] += n.grad[i] / x.data[i];
        }
    });
}

Tensor log_strict(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] > 0.0)) {
            throw std::domain_error("log_strict: nonpositive input " + std::to_string(a[i]) + " at index " +
                                    std::to_string(i));
        }
    }
    return unary(a, "log", [](double x) { return std::log(x); }, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] / x.data[i];
    });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += x.data[i] > 0.0 ? n.grad[i] : 0.0;
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, "sigmoid", stable_sigmoid, [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double s = n.data[i];
            x.grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor clamp_min(const Tensor& a, double c) {
    return unary(a, "clamp_min", [c](double x) { return x > c ? x : c; }, [c](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (x.data[i] > c) x.grad[i] += n.grad[i];
    });
}

Tensor stop_gradient(const Tensor& a) {
    auto node = std::make_shared<DiffNode>();
    node->shape = a.shape();
    node->data.assign(a.data().begin(), a.data().end());
    node->grad.assign(node->data.size(), 0.0);
    node->is_leaf = false;
    node->op = "stop_gradient";
    return Tensor(std::move(node));
}

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) shape_mismatch("matmul", a.shape(), b.shape());
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* c = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
        }
    }
    return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](DiffNode& node) {
        auto& x = *node.inputs[0];
        auto& y = *node.inputs[1];
        const double* G = node.grad.data();
        if (x.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double* yrow = y.data.data() + p * n;
                    const double* grow = G + i * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * yrow[j];
                    x.grad[i * k + p] += s;
                }
            }
        }
        if (y.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = x.data[i * k + p];
                    if (xv == 0.0) continue;
                    double* yg = y.grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) yg[j] += xv * grow[j];
                }
            }
        }
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_rank("add_bias", a, 2);
    require_rank("add_bias", bias, 1);
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    if (bias.shape()[0] != cols) shape_mismatch("add_bias", a.shape(), bias.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bias[j];
    return make_result(a.shape(), std::move(out), {a, bias}, "add_bias", [rows, cols](DiffNode& n) {
        auto& x = *n.inputs[0];
        auto& b = *n.inputs[1];
        if (x.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
        if (b.requires_grad)
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) b.grad[j] += n.grad[i * cols + j];
    });
}

namespace {

struct ConvGeometry {
    std::size_t batch, in_ch, height, width, out_ch, kernel, pad;
    std::size_t patch() const { return in_ch * kernel * kernel; }
    std::size_t pixels() const { return height * width; }
};

// cols[(c*k + ky)*k + kx][y*w + x] = input[c][y+ky-pad][x+kx-pad] (zero outside)
void im2col(const ConvGeometry& g, const double* image, std::vector<double>& cols) {
    const std::size_t hw = g.pixels();
    cols.assign(g.patch() * hw, 0.0);
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        const double* plane = image + c * hw;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                double* row = cols.data() + ((c * g.kernel + ky) * g.kernel + kx) * hw;
                for (std::size_t y = 0; y < g.height; ++y) {
                    const long sy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
                    if (sy < 0 || sy >= static_cast<long>(g.height)) continue;
                    for (std::size_t x = 0; x < g.width; ++x) {
                        const long sx = static_cast<long>(x + kx) - static_cast<long>(g.pad);
                        if (sx < 0 || sx >= static_cast<long>(g.width)) continue;
                        row[y * g.width + x] = plane[sy * g.width + sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const std::vector<double>& cols, double* image_grad) {
    const std::size_t hw = g.pixels();
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        double* plane = image_grad + c * hw;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const double* row = cols.data() + ((c * g.kernel + ky) * g.kernel + kx) * hw;
                for (std::size_t y = 0; y < g.height; ++y) {
                    const long sy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
                    if (sy < 0 || sy >= static_cast<long>(g.height)) continue;
                    for (std::size_t x = 0; x < g.width; ++x) {
                        const long sx = static_cast<long>(x + kx) - static_cast<long>(g.pad);
                        if (sx < 0 || sx >= static_cast<long>(g.width)) continue;
                        plane[sy * g.width + sx] += row[y * g.width + x];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", weight, 4);
    require_rank("conv2d", bias, 1);
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[1] != xs[1] || ws[2] != ws[3] || ws[2] % 2 == 0) shape_mismatch("conv2d", xs, ws);
    if (bias.shape()[0] != ws[0]) shape_mismatch("conv2d", ws, bias.shape());
    const ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], (ws[2] - 1) / 2};
    const std::size_t hw = g.pixels(), patch = g.patch();

    std::vector<double> out(g.batch * g.out_ch * hw);
    std::vector<double> cols;
    for (std::size_t n = 0; n < g.batch; ++n) {
        im2col(g, x.data().data() + n * g.in_ch * hw, cols);
        for (std::size_t o = 0; o < g.out_ch; ++o) {
            double* dst = out.data() + (n * g.out_ch + o) * hw;
            std::fill(dst, dst + hw, bias[o]);
            const double* w = weight.data().data() + o * patch;
            for (std::size_t p = 0; p < patch; ++p) {
                const double wv = w[p];
                const double* src = cols.data() + p * hw;
                for (std::size_t i = 0; i < hw; ++i) dst[i] += wv * src[i];
            }
        }
    }
    return make_result({g.batch, g.out_ch, g.height, g.width}, std::move(out), {x, weight, bias}, "conv2d",
                       [g](DiffNode& node) {
                           auto& in = *node.inputs[0];
                           auto& w = *node.inputs[1];
                           auto& b = *node.inputs[2];
                           const std::size_t hw = g.pixels(), patch = g.patch();
                           std::vector<double> cols, cols_t, dcols;
                           for (std::size_t n = 0; n < g.batch; ++n) {
                               const double* gout = node.grad.data() + n * g.out_ch * hw;
                               if (b.requires_grad) {
                                   for (std::size_t o = 0; o < g.out_ch; ++o) {
                                       double s = 0.0;
                                       for (std::size_t i = 0; i < hw; ++i) s += gout[o * hw + i];
                                       b.grad[o] += s;
                                   }
                               }
                               if (w.requires_grad) {
                                   im2col(g, in.data.data() + n * g.in_ch * hw, cols);
                                   // pixel-major copy so the update below is a contiguous axpy
                                   cols_t.resize(patch * hw);
                                   for (std::size_t p = 0; p < patch; ++p)
                                       for (std::size_t i = 0; i < hw; ++i) cols_t[i * patch + p] = cols[p * hw + i];
                                   for (std::size_t o = 0; o < g.out_ch; ++o) {
                                       const double* go = gout + o * hw;
                                       double* wg = w.grad.data() + o * patch;
                                       for (std::size_t i = 0; i < hw; ++i) {
                                           const double gv = go[i];
                                           if (gv == 0.0) continue;
                                           const double* src = cols_t.data() + i * patch;
                                           for (std::size_t p = 0; p < patch; ++p) wg[p] += gv * src[p];
                                       }
                                   }
                               }
                               if (in.requires_grad) {
                                   dcols.assign(patch * hw, 0.0);
                                   for (std::size_t o = 0; o < g.out_ch; ++o) {
                                       const double* go = gout + o * hw;
                                       const double* wr = w.data.data() + o * patch;
                                       for (std::size_t p = 0; p < patch; ++p) {
                                           const double wv = wr[p];
                                           double* dst = dcols.data() + p * hw;
                                           for (std::size_t i = 0; i < hw; ++i) dst[i] += wv * go[i];
                                       }
                                   }
                                   col2im_add(g, dcols, in.grad.data() + n * g.in_ch * hw);
                               }
                           }
                       });
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
    require_rank("max_pool2d", x, 4);
    const auto& s = x.shape();
    if (window == 0 || s[2] % window != 0 || s[3] % window != 0) {
        throw ShapeError("max_pool2d: window " + std::to_string(window) + " does not tile " + to_string(s));
    }
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
    const std::size_t oh = h / window, ow = w / window;
    std::vector<double> out(planes * oh * ow);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
                std::size_t best = p * h * w + (y * window) * w + xo * window;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = p * h * w + (y * window + dy) * w + xo * window + dx;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (p * oh + y) * ow + xo;
                out[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    return make_result({s[0], s[1], oh, ow}, std::move(out), {x}, "max_pool2d",
                       [argmax = std::move(argmax)](DiffNode& n) {
                           auto& in = *n.inputs[0];
                           for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[argmax[i]] += n.grad[i];
                       });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) shape_mismatch("reshape", a.shape(), shape);
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, "reshape", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
    });
}

Tensor flatten_rows(const Tensor& a) {
    if (a.shape().empty()) throw ShapeError("flatten_rows: scalar input");
    const std::size_t rows = a.shape()[0];
    return reshape(a, {rows, rows == 0 ? 0 : a.size() / rows});
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank("concat_cols", a, 2);
    require_rank("concat_cols", b, 2);
    if (a.shape()[0] != b.shape()[0]) shape_mismatch("concat_cols", a.shape(), b.shape());
    const std::size_t rows = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
    std::vector<double> out(rows * (p + q));
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(a.data().data() + i * p, p, out.data() + i * (p + q));
        std::copy_n(b.data().data() + i * q, q, out.data() + i * (p + q) + p);
    }
    return make_result({rows, p + q}, std::move(out), {a, b}, "concat_cols", [rows, p, q](DiffNode& n) {
        auto& x = *n.inputs[0];
        auto& y = *n.inputs[1];
        for (std::size_t i = 0; i < rows; ++i) {
            if (x.requires_grad)
                for (std::size_t j = 0; j < p; ++j) x.grad[i * p + j] += n.grad[i * (p + q) + j];
            if (y.requires_grad)
                for (std::size_t j = 0; j < q; ++j) y.grad[i * q + j] += n.grad[i * (p + q) + p + j];
        }
    });
}

Tensor softmax(const Tensor& a) {
    if (a.shape().empty()) throw ShapeError("softmax: scalar input");
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.size() / cols;
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = a.data().data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
    }
    return make_result(a.shape(), std::move(out), {a}, "softmax", [rows, cols](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.data.data() + r * cols;
            const double* g = n.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < cols; ++j) x.grad[r * cols + j] += y[j] * (g[j] - dot);
        }
    });
}

// --- reductions --------------------------------------------------------------

Tensor sum(const Tensor& a) {
    const double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    return make_result({}, {s}, {a}, "sum", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (auto& g : x.grad) g += n.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    const double count = static_cast<double>(a.size());
    const double s = std::accumulate(a.data().begin(), a.data().end(), 0.0) / count;
    return make_result({}, {s}, {a}, "mean", [count](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (auto& g : x.grad) g += n.grad[0] / count;
    });
}

Tensor l2_norm(const Tensor& a) {
    double ss = 0.0;
    for (double v : a.data()) ss += v * v;
    return make_result({}, {std::sqrt(ss)}, {a}, "l2_norm", [](DiffNode& n) {
        auto& x = *n.inputs[0];
        const double norm = n.data[0];
        if (norm == 0.0) return;
        for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += n.grad[0] * x.data[i] / norm;
    });
}

Tensor row_sum(const Tensor& a) {
    const auto L = row_layout("row_sum", a.shape());
    std::vector<double> out(L.rows, 0.0);
    for (std::size_t r = 0; r < L.rows; ++r)
        for (std::size_t j = 0; j < L.cols; ++j) out[r] += a[r * L.cols + j];
    return make_result(L.out_shape, std::move(out), {a}, "row_sum", [L](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t r = 0; r < L.rows; ++r)
            for (std::size_t j = 0; j < L.cols; ++j) x.grad[r * L.cols + j] += n.grad[r];
    });
}

Tensor row_l2_norm(const Tensor& a) {
    const auto L = row_layout("row_l2_norm", a.shape());
    std::vector<double> out(L.rows, 0.0);
    for (std::size_t r = 0; r < L.rows; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < L.cols; ++j) ss += a[r * L.cols + j] * a[r * L.cols + j];
        out[r] = std::sqrt(ss);
    }
    return make_result(L.out_shape, std::move(out), {a}, "row_l2_norm", [L](DiffNode& n) {
        auto& x = *n.inputs[0];
        for (std::size_t r = 0; r < L.rows; ++r) {
            const double norm = n.data[r];
            if (norm == 0.0) continue;  // subgradient 0 at the origin
            for (std::size_t j = 0; j < L.cols; ++j)
                x.grad[r * L.cols + j] += n.grad[r] * x.data[r * L.cols + j] / norm;
        }
    });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
    require_same_shape("cosine_similarity", a, b);
    const auto L = row_layout("cosine_similarity", a.shape());
    std::vector<double> out(L.rows), na(L.rows), nb(L.rows);
    for (std::size_t r = 0; r < L.rows; ++r) {
        double dot = 0.0, sa = 0.0, sb = 0.0;
        for (std::size_t j = 0; j < L.cols; ++j) {
            const double x = a[r * L.cols + j], y = b[r * L.cols + j];
            dot += x * y;
            sa += x * x;
            sb += y * y;
        }
        na[r] = std::sqrt(sa);
        nb[r] = std::sqrt(sb);
        if (eps == 0.0 && (na[r] == 0.0 || nb[r] == 0.0)) {
            throw std::domain_error("cosine_similarity: zero-norm vector in row " + std::to_string(r));
        }
        na[r] = std::max(na[r], eps);
        nb[r] = std::max(nb[r], eps);
        out[r] = dot / (na[r] * nb[r]);
    }
    return make_result(L.out_shape, std::move(out), {a, b}, "cosine_similarity",
                       [L, na = std::move(na), nb = std::move(nb), eps](DiffNode& n) {
                           auto& x = *n.inputs[0];
                           auto& y = *n.inputs[1];
                           for (std::size_t r = 0; r < L.rows; ++r) {
                               const double g = n.grad[r], c = n.data[r];
                               // Floored norms are constants: only the dot term survives.
                               double sqa = 0.0, sqb = 0.0;
                               for (std::size_t j = 0; j < L.cols; ++j) {
                                   sqa += x.data[r * L.cols + j] * x.data[r * L.cols + j];
                                   sqb += y.data[r * L.cols + j] * y.data[r * L.cols + j];
                               }
                               const bool a_live = std::sqrt(sqa) >= eps;
                               const bool b_live = std::sqrt(sqb) >= eps;
                               const double inv = 1.0 / (na[r] * nb[r]);
                               for (std::size_t j = 0; j < L.cols; ++j) {
                                   const std::size_t k = r * L.cols + j;
                                   if (x.requires_grad) {
                                       double d = y.data[k] * inv;
                                       if (a_live) d -= c * x.data[k] / (na[r] * na[r]);
                                       x.grad[k] += g * d;
                                   }
                                   if (y.requires_grad) {
                                       double d = x.data[k] * inv;
                                       if (b_live) d -= c * y.data[k] / (nb[r] * nb[r]);
                                       y.grad[k] += g * d;
                                   }
                               }
                           }
                       });
}

Tensor kl_divergence(const Tensor& p, const Tensor& q, bool clamp) {
    require_same_shape("kl_divergence", p, q);
    const auto L = row_layout("kl_divergence", p.shape());
    if (!clamp) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!(p[i] > 0.0) || !(q[i] > 0.0)) {
                throw std::domain_error("kl_divergence: zero probability at index " + std::to_string(i) +
                                        " without log clamp");
            }
        }
    }
    const auto safe_log = [clamp](double v) { return std::log(clamp ? std::max(v, kLogFloor) : v); };
    std::vector<double> out(L.rows, 0.0);
    for (std::size_t r = 0; r < L.rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < L.cols; ++j) {
            const double pv = p[r * L.cols + j], qv = q[r * L.cols + j];
            s += pv * (safe_log(pv) - safe_log(qv));
        }
        out[r] = s;
    }
    return make_result(L.out_shape, std::move(out), {p, q}, "kl_divergence", [L, clamp, safe_log](DiffNode& n) {
        auto& P = *n.inputs[0];
        auto& Q = *n.inputs[1];
        for (std::size_t r = 0; r < L.rows; ++r) {
            const double g = n.grad[r];
            for (std::size_t j = 0; j < L.cols; ++j) {
                const std::size_t k = r * L.cols + j;
                const double pv = P.data[k], qv = Q.data[k];
                if (P.requires_grad) {
                    const double live = (!clamp || pv >= kLogFloor) ? 1.0 : 0.0;
                    P.grad[k] += g * (safe_log(pv) + live - safe_log(qv));
                }
                if (Q.requires_grad && (!clamp || qv >= kLogFloor)) Q.grad[k] -= g * pv / qv;
            }
        }
    });
}

// --- backward ----------------------------------------------------------------

void backward(const Tensor& root) {
    if (!root.defined()) throw std::invalid_argument("backward: undefined root");
    if (root.size() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " + to_string(root.shape()));
    }
    // Iterative post-order DFS over nodes that carry gradient.
    std::vector<DiffNode*> order;
    std::unordered_set<DiffNode*> seen;
    std::vector<std::pair<DiffNode*, std::size_t>> stack;
    DiffNode* start = &root.node();
    stack.emplace_back(start, 0);
    seen.insert(start);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            DiffNode* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (DiffNode* n : order)
        if (!n->is_leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    start->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        DiffNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

}  // namespace splitpu::ad
