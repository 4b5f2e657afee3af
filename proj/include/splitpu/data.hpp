#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "splitpu/autodiff.hpp"

namespace splitpu::data {

using ad::Shape;
using ad::Tensor;

/// Dense samples of one shape plus an integer label per sample (class id for
/// raw records, +1/-1 once binarized).
struct LabeledSet {
    Shape sample_shape;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return ad::numel(sample_shape); }
    std::span<const double> sample(std::size_t i) const {
        return {features.data() + i * sample_size(), sample_size()};
    }
    std::size_t count_label(int label) const;
};

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// CIFAR-10 binary batches: 3073-byte records (label byte + 3072 channel-major pixels).
LabeledSet load_cifar10_binary(const std::filesystem::path& path);
LabeledSet load_cifar10_binary(std::span<const std::uint8_t> bytes);
/// IDX image file (magic 0x00000803) paired with an IDX label file (0x00000801).
LabeledSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
LabeledSet load_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Vehicles (airplane, automobile, ship, truck = 0,1,8,9) -> +1, animals -> -1.
LabeledSet binarize_cifar10(const LabeledSet& records);
/// Classes below `threshold` -> +1, the rest -> -1 (digits <5 vs >=5).
LabeledSet binarize_below(const LabeledSet& records, int threshold, int num_classes = 10);

/// Positives ~ N(+mu, I), negatives ~ N(-mu, I) with ||2 mu|| = separation
/// along the all-ones direction. Positives come first.
LabeledSet synth_two_gaussians(std::size_t n_pos, std::size_t n_neg, std::size_t dim, double separation,
                               std::uint64_t seed);
/// Best achievable accuracy for the two-Gaussian model with positive prior `prior`.
double gaussian_bayes_accuracy(double separation, double prior = 0.5);

void write_csv(const LabeledSet& set, const std::filesystem::path& path);

class LabelLeakError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Capability for reading ground-truth labels of unlabeled samples. Only
/// obtainable in analysis mode.
class Oracle {
  public:
    static Oracle grant(bool analysis_mode);

  private:
    Oracle() = default;
};

/// Labeled positives, unlabeled mixture, class prior and a labeled test set.
/// Ground truth of the unlabeled part is held back behind an Oracle.
class PUDataset {
  public:
    const Shape& sample_shape() const { return sample_shape_; }
    std::size_t sample_size() const { return ad::numel(sample_shape_); }
    std::size_t num_positive() const { return positive_index_.size(); }
    std::size_t num_unlabeled() const { return unlabeled_index_.size(); }

    std::span<const double> positives() const { return positives_; }
    std::span<const double> unlabeled() const { return unlabeled_; }
    std::span<const double> positive(std::size_t i) const {
        return {positives_.data() + i * sample_size(), sample_size()};
    }
    std::span<const double> unlabeled(std::size_t i) const {
        return {unlabeled_.data() + i * sample_size(), sample_size()};
    }

    /// Source-row indices into the dataset the split was made from.
    std::span<const std::size_t> positive_source_index() const { return positive_index_; }
    std::span<const std::size_t> unlabeled_source_index() const { return unlabeled_index_; }

    double prior() const { return prior_; }
    void set_prior(double prior);

    const LabeledSet& test() const { return test_; }
    void set_test(LabeledSet test);

    std::span<const int> hidden_labels(const Oracle&) const { return hidden_labels_; }

  private:
    friend PUDataset make_pu_split(const LabeledSet& full, std::size_t n_p, std::uint64_t seed);

    Shape sample_shape_;
    std::vector<double> positives_;
    std::vector<double> unlabeled_;
    std::vector<std::size_t> positive_index_;
    std::vector<std::size_t> unlabeled_index_;
    std::vector<int> hidden_labels_;
    double prior_ = 0.5;
    LabeledSet test_;
};

/// Picks n_p positives uniformly at random as the labeled set; every other
/// sample becomes unlabeled. The prior is the positive fraction of `full`.
PUDataset make_pu_split(const LabeledSet& full, std::size_t n_p, std::uint64_t seed);

// --- augmentation --------------------------------------------------------------

enum class AugmentKind { Weak, Strong };
enum class StrongKind { Jitter, Cutout };

struct AugmentParams {
    // images
    std::size_t crop_pad = 4;
    double flip_prob = 0.5;
    StrongKind strong = StrongKind::Jitter;
    double jitter_min = 0.6;
    double jitter_max = 1.4;
    std::size_t cutout = 8;
    // vectors
    double noise_sigma = 0.05;
    double dropout_p = 0.2;
    double strong_noise_sigma = 0.0;  // added after dropout in the strong view
};

// Deterministic building blocks on a [c,h,w] image.
std::vector<double> hflip(const Shape& shape, std::span<const double> image);
std::vector<double> crop_padded(const Shape& shape, std::span<const double> image, std::size_t pad,
                                std::size_t dy, std::size_t dx);
std::vector<double> color_jitter(const Shape& shape, std::span<const double> image, double brightness,
                                 double contrast);
std::vector<double> cutout(const Shape& shape, std::span<const double> image, std::size_t y0, std::size_t x0,
                           std::size_t size);

/// Seeded weak/strong view generator. Images (rank-3 samples): weak = padded
/// random crop + horizontal flip, strong = brightness/contrast jitter or
/// cutout. Vectors: weak = Gaussian noise, strong = coordinate dropout
/// followed by optional Gaussian noise.
class AugmentationPipeline {
  public:
    AugmentationPipeline(AugmentKind kind, AugmentParams params, std::uint64_t seed);

    std::vector<double> operator()(const Shape& shape, std::span<const double> sample);
    AugmentKind kind() const { return kind_; }

  private:
    AugmentKind kind_;
    AugmentParams params_;
    std::mt19937_64 rng_;
};

/// Stacks the selected samples into [n, ...shape], optionally augmenting each.
Tensor make_batch(const Shape& shape, std::span<const double> features, std::span<const std::size_t> indices,
                  AugmentationPipeline* augment = nullptr);

}  // namespace splitpu::data
