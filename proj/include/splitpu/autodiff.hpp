#pragma once

// Define-by-run reverse-mode differentiation over dense double tensors.
//
// Every op allocates a new DiffNode that remembers its inputs and a closure
// that pushes the node's gradient back into them. backward() walks the graph
// in reverse topological order. Graphs are confined to the thread that built
// them; parameters are leaf nodes that outlive any single graph.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitpu::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Lower clamp applied to every log argument (and therefore to KL).
inline constexpr double kLogFloor = 1e-12;

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct DiffNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    std::vector<std::shared_ptr<DiffNode>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(DiffNode&)> backward_fn;
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<DiffNode> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor zeros(Shape shape);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape.front(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    double operator[](std::size_t i) const { return node_->data[i]; }

    /// Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad();

    DiffNode& node() const { return *node_; }
    const std::shared_ptr<DiffNode>& ptr() const { return node_; }

  private:
    std::shared_ptr<DiffNode> node_;
};

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active();

  private:
    bool previous_;
};

// --- elementwise, same shape -------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
/// Natural log of max(a, kLogFloor).
Tensor log(const Tensor& a);
/// Natural log that rejects nonpositive entries instead of clamping.
Tensor log_strict(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// max(a, c) elementwise. The gradient is zero at the kink (a == c).
Tensor clamp_min(const Tensor& a, double c);
Tensor stop_gradient(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }

// --- linear algebra / layers -------------------------------------------------
/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [n,m] + [m] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Stride 1, zero padding (k-1)/2, odd square kernels.
/// x [n,c,h,w], weight [o,c,k,k], bias [o] -> [n,o,h,w]
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Non-overlapping window max pooling; h and w must be divisible by window.
Tensor max_pool2d(const Tensor& x, std::size_t window);
Tensor reshape(const Tensor& a, Shape shape);
/// [n, ...] -> [n, rest]
Tensor flatten_rows(const Tensor& a);
/// [n,p] ++ [n,q] -> [n,p+q]
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Softmax over the last axis.
Tensor softmax(const Tensor& a);

// --- reductions --------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Euclidean norm of the whole tensor.
Tensor l2_norm(const Tensor& a);

// Row-wise ops treat a rank-1 input as one row and return a scalar, and a
// rank>=2 input [n, ...] as n flattened rows returning shape [n].
Tensor row_sum(const Tensor& a);
Tensor row_l2_norm(const Tensor& a);
/// Cosine similarity per row. With eps == 0 a zero-norm row is rejected;
/// otherwise norms are floored at eps.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 0.0);
/// KL(p || q) per row. With clamp, logs use kLogFloor; without it any
/// nonpositive probability is rejected.
Tensor kl_divergence(const Tensor& p, const Tensor& q, bool clamp = true);

/// Populates gradients of every node reachable from a single-element root.
/// Interior gradients are recomputed on each call; leaf gradients
/// (parameters) accumulate until zero_grad().
void backward(const Tensor& root);

}  // namespace splitpu::ad
