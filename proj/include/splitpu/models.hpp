#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splitpu/autodiff.hpp"

namespace splitpu {

using ad::Shape;
using ad::Tensor;

enum class ArchKind : std::uint32_t { Mlp = 1, Cnn = 2 };

/// Architecture descriptor. MLP: input -> hidden -> hidden -> 1.
/// CNN: conv(c->conv1) -> relu -> conv(conv1->conv2) -> relu -> maxpool -> linear -> 1.
struct Architecture {
    ArchKind kind = ArchKind::Mlp;
    Shape input_shape;  // {dim} for MLP, {channels, height, width} for CNN
    std::size_t hidden = 64;
    std::size_t conv1 = 8;
    std::size_t conv2 = 16;
    std::size_t kernel = 3;
    std::size_t pool = 2;

    static Architecture mlp(std::size_t input_dim, std::size_t hidden = 64);
    static Architecture cnn(std::size_t channels, std::size_t height, std::size_t width);

    std::size_t first_feature_dim() const;
    std::size_t last_feature_dim() const;
    bool operator==(const Architecture&) const = default;
};

/// Three outputs of one forward pass.
struct Taps {
    Tensor logit;  // [n,1]
    Tensor first;  // [n, first_feature_dim]: first hidden / conv activation
    Tensor last;   // [n, last_feature_dim]: penultimate activation
};

enum class Init { HeUniform, Zero };

/// A scalar-logit classifier. Copies are deep; a copy is an independent
/// network with bit-identical parameters.
class Network {
  public:
    Network(Architecture arch, std::uint64_t seed, Init init = Init::HeUniform);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// input: [n, ...input_shape]
    Taps forward_with_taps(const Tensor& input) const;
    Tensor logits(const Tensor& input) const { return forward_with_taps(input).logit; }

    const Architecture& architecture() const { return arch_; }
    std::span<Tensor> parameters() { return params_; }
    std::span<const Tensor> parameters() const { return params_; }
    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;

    /// Versioned little-endian binary image of the architecture and parameters.
    std::vector<std::uint8_t> snapshot() const;
    static Network load(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static Network load_file(const std::filesystem::path& path);

  private:
    Network() = default;
    void check_input(const Tensor& input) const;

    Architecture arch_;
    std::vector<Tensor> params_;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

/// Two affine layers around a ReLU mapping feature space to itself.
/// Hidden width is max(8, dim / 2). An identity head has no parameters.
class PredictorHead {
  public:
    PredictorHead(std::size_t dim, std::uint64_t seed);
    static PredictorHead identity(std::size_t dim);

    PredictorHead(const PredictorHead& other);
    PredictorHead& operator=(const PredictorHead& other);
    PredictorHead(PredictorHead&&) noexcept = default;
    PredictorHead& operator=(PredictorHead&&) noexcept = default;

    Tensor operator()(const Tensor& features) const;
    std::size_t dim() const { return dim_; }
    std::size_t hidden() const { return hidden_; }
    bool is_identity() const { return params_.empty(); }
    std::span<Tensor> parameters() { return params_; }

  private:
    PredictorHead() = default;
    std::size_t dim_ = 0;
    std::size_t hidden_ = 0;
    std::vector<Tensor> params_;
};

/// (sigmoid(z), sigmoid(-z)) per row: [n,1] -> [n,2]. Column 0 is "positive".
Tensor predict_prob(const Tensor& logits);
std::array<double, 2> predict_prob(double logit);

}  // namespace splitpu
