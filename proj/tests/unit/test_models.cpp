#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "splitpu/models.hpp"

using namespace splitpu;

namespace {

Tensor image_batch(std::size_t n) {
    std::vector<double> v(n * 64);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * static_cast<double>(i));
    return Tensor::constant({n, 1, 8, 8}, v);
}

Tensor vector_batch(std::size_t n) {
    std::vector<double> v(n * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::cos(0.91 * static_cast<double>(i)) * 2.0;
    return Tensor::constant({n, 2}, v);
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Network, ZeroInitGivesZeroLogit) {
    const Network mlp(Architecture::mlp(2), 1, Init::Zero);
    const auto z = mlp.logits(vector_batch(5));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(z[i], 0.0);
    const Network cnn(Architecture::cnn(1, 8, 8), 1, Init::Zero);
    const auto zc = cnn.logits(image_batch(3));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(zc[i], 0.0);
}

TEST(Network, TapShapes) {
    const Network mlp(Architecture::mlp(2), 3);
    const auto t = mlp.forward_with_taps(vector_batch(4));
    EXPECT_EQ(t.logit.shape(), (Shape{4, 1}));
    EXPECT_EQ(t.first.shape(), (Shape{4, 64}));
    EXPECT_EQ(t.last.shape(), (Shape{4, 64}));

    const auto arch = Architecture::cnn(1, 8, 8);
    const Network cnn(arch, 3);
    const auto tc = cnn.forward_with_taps(image_batch(2));
    EXPECT_EQ(tc.first.shape()[0], 2u);
    EXPECT_EQ(tc.first.shape()[1], arch.first_feature_dim());
    EXPECT_EQ(tc.last.shape()[1], arch.last_feature_dim());
}

TEST(Network, RejectsWrongInputShape) {
    const Network mlp(Architecture::mlp(2), 3);
    EXPECT_THROW(mlp.logits(Tensor::constant({2, 3}, std::vector<double>(6, 0.0))), ad::ShapeError);
    const Network cnn(Architecture::cnn(1, 8, 8), 3);
    EXPECT_THROW(cnn.logits(vector_batch(2)), ad::ShapeError);
}

TEST(Network, IdenticalInputsGiveIdenticalTaps) {
    const Network net(Architecture::cnn(1, 8, 8), 9);
    const auto a = net.forward_with_taps(image_batch(2));
    const auto b = net.forward_with_taps(image_batch(2));
    EXPECT_EQ(vec(a.logit.data()), vec(b.logit.data()));
    EXPECT_EQ(vec(a.first.data()), vec(b.first.data()));
    EXPECT_EQ(vec(a.last.data()), vec(b.last.data()));
}

TEST(Network, GoldenLogitsForFixedSeed) {
    // Recorded once from this implementation; guards cross-process determinism.
    const Network mlp(Architecture::mlp(2), 42);
    const Network cnn(Architecture::cnn(1, 8, 8), 42);
    const double mlp_logit = mlp.logits(vector_batch(1))[0];
    const double cnn_logit = cnn.logits(image_batch(1))[0];
    EXPECT_DOUBLE_EQ(mlp_logit, -1.1573505373872646);
    EXPECT_DOUBLE_EQ(cnn_logit, -0.46317461119476788);
}

TEST(Network, SeedsChangeInitialization) {
    const Network a(Architecture::mlp(2), 1), b(Architecture::mlp(2), 2);
    EXPECT_NE(a.flat_parameters(), b.flat_parameters());
}

TEST(Network, CopyIsDeep) {
    Network a(Architecture::mlp(2), 1);
    Network b = a;
    b.parameters()[0].mutable_data()[0] += 1.0;
    EXPECT_NE(a.flat_parameters(), b.flat_parameters());
}

TEST(Snapshot, RoundTripPreservesForward) {
    const Network net(Architecture::cnn(1, 8, 8), 5);
    const auto bytes = net.snapshot();
    const Network back = Network::load(bytes);
    EXPECT_EQ(back.architecture(), net.architecture());
    EXPECT_EQ(vec(back.logits(image_batch(3)).data()), vec(net.logits(image_batch(3)).data()));
    EXPECT_EQ(back.snapshot(), bytes);
}

TEST(Snapshot, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "splitpu_model_test.bin";
    const Network net(Architecture::mlp(2), 5);
    net.save(path);
    EXPECT_EQ(Network::load_file(path).flat_parameters(), net.flat_parameters());
    std::filesystem::remove(path);
}

TEST(Snapshot, RejectsVersionMismatchAndTruncation) {
    const Network net(Architecture::mlp(2), 5);
    auto bytes = net.snapshot();
    auto truncated = bytes;
    truncated.resize(truncated.size() / 2);
    EXPECT_THROW(Network::load(truncated), std::runtime_error);
    // locate the version word and bump it
    bool bumped = false;
    for (std::size_t i = 0; i + 4 <= bytes.size() && i < 16; ++i) {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + i, 4);
        if (v == kSnapshotVersion) {
            v += 1;
            std::memcpy(bytes.data() + i, &v, 4);
            bumped = true;
            break;
        }
    }
    ASSERT_TRUE(bumped);
    EXPECT_THROW(Network::load(bytes), std::runtime_error);
}

TEST(PredictorHead, PreservesDimension) {
    const PredictorHead head(16, 3);
    const auto out = head(Tensor::constant({4, 16}, std::vector<double>(64, 0.5)));
    EXPECT_EQ(out.shape(), (Shape{4, 16}));
    const auto id = PredictorHead::identity(16);
    EXPECT_TRUE(id.is_identity());
    const auto x = Tensor::constant({1, 16}, std::vector<double>(16, 0.25));
    EXPECT_EQ(vec(id(x).data()), vec(x.data()));
}

TEST(PredictProb, ScalarValues) {
    const auto half = predict_prob(0.0);
    EXPECT_EQ(half[0], 0.5);
    EXPECT_EQ(half[1], 0.5);
    const auto sat = predict_prob(20.0);
    EXPECT_NEAR(sat[0], 1.0, 1e-8);
    EXPECT_NEAR(sat[1], 0.0, 1e-8);
    const long double s1 = 1.0L / (1.0L + std::exp(-1.0L));
    const auto one = predict_prob(1.0);
    EXPECT_NEAR(one[0], static_cast<double>(s1), 1e-15);
    EXPECT_NEAR(one[0], 0.73106, 1e-5);
    EXPECT_NEAR(one[1], 0.26894, 1e-5);
}

TEST(PredictProb, TensorRowsSumToOne) {
    const auto p = predict_prob(Tensor::constant({3, 1}, {-4.0, 0.0, 7.5}));
    EXPECT_EQ(p.shape(), (Shape{3, 2}));
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(p[2 * r] + p[2 * r + 1], 1.0, 1e-15);
}
