#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "splitpu/data.hpp"

using namespace splitpu::data;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> out;
    put_be32(out, 0x00000803);
    put_be32(out, n);
    put_be32(out, rows);
    put_be32(out, cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) out.push_back(static_cast<std::uint8_t>(i % 256));
    return out;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    put_be32(out, 0x00000801);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

LabeledSet ten_class_records(std::size_t per_class) {
    LabeledSet s;
    s.sample_shape = {1, 2, 2};
    for (int c = 0; c < 10; ++c)
        for (std::size_t k = 0; k < per_class; ++k) {
            s.labels.push_back(c);
            for (int p = 0; p < 4; ++p) s.features.push_back(0.1 * c);
        }
    return s;
}

std::vector<double> ramp_image(const Shape& shape) {
    std::vector<double> v(splitpu::ad::numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>((i * 37) % 101) / 100.0;
    return v;
}

}  // namespace

TEST(Idx, ParsesImagesAndLabels) {
    const auto images = idx_images(3, 2, 2);
    const auto labels = idx_labels({7, 0, 4});
    const auto set = load_idx(images, labels);
    EXPECT_EQ(set.size(), 3u);
    EXPECT_EQ(set.sample_shape, (Shape{1, 2, 2}));
    EXPECT_EQ(set.labels, (std::vector<int>{7, 0, 4}));
    EXPECT_DOUBLE_EQ(set.features[5], 5.0 / 255.0);
}

TEST(Idx, RejectsBadMagicTruncationAndCountMismatch) {
    auto images = idx_images(3, 2, 2);
    const auto labels = idx_labels({1, 2, 3});
    EXPECT_THROW(load_idx(images, idx_labels({1, 2})), FormatError);
    EXPECT_THROW(load_idx(labels, labels), FormatError);
    EXPECT_THROW(load_idx(std::vector<std::uint8_t>{}, labels), FormatError);
    auto truncated = images;
    truncated.pop_back();
    try {
        load_idx(truncated, labels);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
}

TEST(Cifar, ParsesRecordsAndChecksLength) {
    std::vector<std::uint8_t> bytes;
    for (std::uint8_t label : {0, 5}) {
        bytes.push_back(label);
        for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(i % 256));
    }
    EXPECT_EQ(bytes.size(), 2u * 3073u);
    const auto set = load_cifar10_binary(bytes);
    EXPECT_EQ(set.size(), 2u);
    EXPECT_EQ(set.sample_shape, (Shape{3, 32, 32}));
    EXPECT_DOUBLE_EQ(set.features[255], 1.0);
    EXPECT_EQ(10000u * 3073u, 30730000u);

    const auto bin = binarize_cifar10(set);
    EXPECT_EQ(bin.labels, (std::vector<int>{+1, -1}));

    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(load_cifar10_binary(truncated), FormatError);
    EXPECT_THROW(load_cifar10_binary(std::vector<std::uint8_t>{}), FormatError);
    bytes[3073] = 10;
    EXPECT_THROW(load_cifar10_binary(bytes), FormatError);
}

TEST(Binarize, VehiclesArePositiveAndPriorIsPointFour) {
    const auto bin = binarize_cifar10(ten_class_records(20));
    for (std::size_t i = 0; i < bin.size(); ++i) {
        const int cls = static_cast<int>(i / 20);
        const bool vehicle = cls == 0 || cls == 1 || cls == 8 || cls == 9;
        EXPECT_EQ(bin.labels[i], vehicle ? +1 : -1);
    }
    EXPECT_EQ(bin.count_label(+1), 80u);
    EXPECT_EQ(bin.count_label(-1), 120u);
    const auto pu = make_pu_split(bin, 10, 3);
    EXPECT_DOUBLE_EQ(pu.prior(), 0.4);

    auto bad = ten_class_records(1);
    bad.labels[0] = 11;
    EXPECT_THROW(binarize_cifar10(bad), std::invalid_argument);
}

TEST(Binarize, BelowThreshold) {
    const auto bin = binarize_below(ten_class_records(1), 5);
    for (int c = 0; c < 10; ++c) EXPECT_EQ(bin.labels[c], c < 5 ? +1 : -1);
}

TEST(PuSplit, SizesPriorAndDisjointness) {
    const auto full = synth_two_gaussians(300, 500, 2, 3.0, 1);
    const auto pu = make_pu_split(full, 40, 9);
    EXPECT_EQ(pu.num_positive(), 40u);
    EXPECT_EQ(pu.num_unlabeled(), 760u);
    EXPECT_DOUBLE_EQ(pu.prior(), 300.0 / 800.0);

    std::set<std::size_t> seen;
    for (auto i : pu.positive_source_index()) {
        EXPECT_EQ(full.labels[i], +1);
        seen.insert(i);
    }
    for (auto i : pu.unlabeled_source_index()) EXPECT_TRUE(seen.insert(i).second) << "index " << i << " in both";
    EXPECT_EQ(seen.size(), 800u);

    const auto hidden = pu.hidden_labels(Oracle::grant(true));
    for (std::size_t k = 0; k < pu.num_unlabeled(); ++k) {
        EXPECT_EQ(hidden[k], full.labels[pu.unlabeled_source_index()[k]]);
    }
}

TEST(PuSplit, SameSeedSamePartition) {
    const auto full = synth_two_gaussians(100, 100, 3, 2.0, 4);
    const auto a = make_pu_split(full, 20, 5), b = make_pu_split(full, 20, 5), c = make_pu_split(full, 20, 6);
    EXPECT_TRUE(std::ranges::equal(a.positive_source_index(), b.positive_source_index()));
    EXPECT_FALSE(std::ranges::equal(a.positive_source_index(), c.positive_source_index()));
}

TEST(PuSplit, ExhaustingPositivesLeavesOnlyNegatives) {
    const auto full = synth_two_gaussians(30, 50, 2, 3.0, 1);
    const auto pu = make_pu_split(full, 30, 2);
    for (int y : pu.hidden_labels(Oracle::grant(true))) EXPECT_EQ(y, -1);
    EXPECT_THROW(make_pu_split(full, 31, 2), std::invalid_argument);
}

TEST(PuSplit, OracleRequiresAnalysisMode) {
    EXPECT_THROW(Oracle::grant(false), LabelLeakError);
    auto pu = make_pu_split(synth_two_gaussians(10, 10, 2, 3.0, 1), 2, 2);
    EXPECT_THROW(pu.set_prior(1.0), std::invalid_argument);
    EXPECT_THROW(pu.set_prior(0.0), std::invalid_argument);
}

TEST(Gaussians, BayesAccuracy) {
    EXPECT_NEAR(gaussian_bayes_accuracy(4.0), 0.5 * std::erfc(-2.0 / std::sqrt(2.0)), 1e-12);
    EXPECT_NEAR(gaussian_bayes_accuracy(4.0), 0.9772, 1e-4);
    EXPECT_NEAR(gaussian_bayes_accuracy(0.0), 0.5, 1e-12);
    EXPECT_NEAR(gaussian_bayes_accuracy(0.0, 0.4), 0.6, 1e-12);
}

TEST(Gaussians, ReproducibleMeansAndErrors) {
    const auto a = synth_two_gaussians(2000, 2000, 2, 4.0, 8);
    const auto b = synth_two_gaussians(2000, 2000, 2, 4.0, 8);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    // along the all-ones direction each class mean sits at +/- separation/2
    double mp = 0.0, mn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double proj = (a.features[2 * i] + a.features[2 * i + 1]) / std::sqrt(2.0);
        (a.labels[i] > 0 ? mp : mn) += proj / 2000.0;
    }
    EXPECT_NEAR(mp, 2.0, 0.1);
    EXPECT_NEAR(mn, -2.0, 0.1);
    EXPECT_THROW(synth_two_gaussians(0, 10, 2, 3.0, 1), std::invalid_argument);
    EXPECT_THROW(synth_two_gaussians(10, 10, 0, 3.0, 1), std::invalid_argument);
}

TEST(Augment, FlipIsInvolution) {
    const Shape shape{3, 4, 5};
    const auto img = ramp_image(shape);
    EXPECT_EQ(hflip(shape, hflip(shape, img)), img);
    EXPECT_NE(hflip(shape, img), img);
}

TEST(Augment, CenteredCropIsIdentity) {
    const Shape shape{1, 6, 6};
    const auto img = ramp_image(shape);
    EXPECT_EQ(crop_padded(shape, img, 2, 2, 2), img);
    const auto shifted = crop_padded(shape, img, 2, 0, 0);
    EXPECT_EQ(shifted[0], 0.0);  // padding shows in the corner
}

TEST(Augment, CutoutZeroesExactlyOnePatch) {
    const Shape shape{2, 8, 8};
    std::vector<double> img(128, 0.5);
    const auto out = cutout(shape, img, 2, 3, 4);
    std::size_t zeros = 0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
                const bool inside = y >= 2 && y < 6 && x >= 3 && x < 7;
                const double v = out[(c * 8 + y) * 8 + x];
                EXPECT_EQ(v, inside ? 0.0 : 0.5);
                zeros += v == 0.0;
            }
    EXPECT_EQ(zeros, 2u * 16u);
}

TEST(Augment, UnitJitterIsIdentity) {
    const Shape shape{3, 4, 4};
    const auto img = ramp_image(shape);
    const auto out = color_jitter(shape, img, 1.0, 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-15);
    AugmentParams p;
    p.jitter_min = p.jitter_max = 1.0;
    AugmentationPipeline strong(AugmentKind::Strong, p, 4);
    const auto piped = strong(shape, img);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(piped[i], img[i], 1e-15);
}

TEST(Augment, SeededAndInPixelRange) {
    const Shape shape{3, 8, 8};
    const auto img = ramp_image(shape);
    for (auto kind : {AugmentKind::Weak, AugmentKind::Strong}) {
        for (auto strong : {StrongKind::Jitter, StrongKind::Cutout}) {
            AugmentParams p;
            p.strong = strong;
            p.cutout = 3;
            AugmentationPipeline a(kind, p, 17), b(kind, p, 17);
            for (int rep = 0; rep < 20; ++rep) {
                const auto x = a(shape, img);
                EXPECT_EQ(x, b(shape, img));
                ASSERT_EQ(x.size(), img.size());
                for (double v : x) {
                    EXPECT_GE(v, 0.0);
                    EXPECT_LE(v, 1.0);
                }
            }
        }
    }
}

TEST(Augment, VectorViews) {
    const Shape shape{4};
    const std::vector<double> v{1.0, -2.0, 3.0, 0.5};
    AugmentParams p;
    AugmentationPipeline weak(AugmentKind::Weak, p, 1), strong(AugmentKind::Strong, p, 1);
    const auto w = weak(shape, v);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], v[i], 0.5);
    std::size_t dropped = 0, total = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        const auto s = strong(shape, v);
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_TRUE(s[i] == 0.0 || s[i] == v[i]);
            dropped += s[i] == 0.0;
            ++total;
        }
    }
    EXPECT_NEAR(static_cast<double>(dropped) / static_cast<double>(total), 0.2, 0.02);
}

TEST(Batch, StacksSelectedRows) {
    const std::vector<double> feats{0, 1, 10, 11, 20, 21};
    const std::vector<std::size_t> idx{2, 0};
    const auto b = make_batch({2}, feats, idx);
    EXPECT_EQ(b.shape(), (Shape{2, 2}));
    EXPECT_EQ(b[0], 20.0);
    EXPECT_EQ(b[3], 1.0);
}
