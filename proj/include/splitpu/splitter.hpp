#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "splitpu/data.hpp"
#include "splitpu/models.hpp"

namespace splitpu::splitter {

/// Soft pseudo-labels (p_pos, p_neg) for every unlabeled sample, in
/// unlabeled-set order.
struct PseudoLabeledSet {
    std::vector<double> soft;  // n x 2, row-major

    std::size_t size() const { return soft.size() / 2; }
    std::array<double, 2> operator[](std::size_t i) const { return {soft[2 * i], soft[2 * i + 1]}; }
    /// argmax with ties to +1
    int hard_label(std::size_t i) const { return soft[2 * i] >= soft[2 * i + 1] ? +1 : -1; }
    /// [k,2] constant tensor of the selected rows, optionally one-hot.
    Tensor rows(std::span<const std::size_t> indices, bool one_hot = false) const;
};

/// Labels +1/-1 by the sign of the logit, logit == 0 counting as positive.
std::vector<int> predict_labels(const Network& model, const Shape& shape, std::span<const double> samples);
/// Raw logits in inference mode.
std::vector<double> predict_logits(const Network& model, const Shape& shape, std::span<const double> samples);

PseudoLabeledSet pseudo_label(const Network& teacher, const Shape& shape, std::span<const double> unlabeled);

/// Fraction of samples whose predicted label equals the hard pseudo-label.
double agreement(const Network& model, const PseudoLabeledSet& pseudo, const Shape& shape,
                 std::span<const double> unlabeled);

struct TempConfig {
    double tau = 0.92;
    double lr = 1e-3;
    double momentum = 0.9;
    std::size_t max_epochs = 200;
    std::size_t batch_size = 64;
    bool augment = false;
    data::AugmentParams augment_params;
    std::uint64_t seed = 0;  // init + shuffling + augmentation
};

struct TempResult {
    Network temp;
    /// agreement[0] is measured before training, agreement[e] after epoch e.
    std::vector<double> agreement;
    std::vector<double> loss;  // mean batch loss per epoch, loss[0] unused (NaN)
    std::size_t stop_epoch = 0;
    bool reached_tau = false;
};

/// Distills the pseudo-labels into `temp` with soft-label cross entropy and
/// slow SGD, stopping after the first epoch whose agreement exceeds tau.
TempResult train_temporary(Network temp, const PseudoLabeledSet& pseudo, const Shape& shape,
                           std::span<const double> unlabeled, const TempConfig& config);
/// Same, starting from a fresh initialization of the teacher's architecture.
TempResult train_temporary_fresh(const Network& teacher, const PseudoLabeledSet& pseudo, const Shape& shape,
                                 std::span<const double> unlabeled, const TempConfig& config);

struct SplitResult {
    std::vector<std::size_t> easy;
    std::vector<std::size_t> hard;
    std::size_t stop_epoch = 0;
    double stop_accuracy = 1.0;
    bool reached_tau = true;

    std::size_t size() const { return easy.size() + hard.size(); }
};

/// hard = samples where the temporary model disagrees with the pseudo-label.
SplitResult early_stop_split(const Network& temp, const PseudoLabeledSet& pseudo, const Shape& shape,
                             std::span<const double> unlabeled, std::size_t stop_epoch = 0, bool reached_tau = true);
/// Throws std::logic_error unless easy and hard are disjoint and together
/// cover 0..n-1 exactly once.
void check_partition(const SplitResult& split, std::size_t n_unlabeled);

/// Every unlabeled sample easy (the no-early-stop ablation).
SplitResult all_easy_split(std::size_t n_unlabeled);

struct SplitQuality {
    double tau = 0.0;
    std::size_t stop_epoch = 0;
    std::size_t n_easy = 0;
    std::size_t n_hard = 0;
    std::size_t noisy_easy = 0;
    std::size_t noisy_hard = 0;

    double noise_rate_easy() const { return n_easy ? double(noisy_easy) / double(n_easy) : 0.0; }
    double noise_rate_hard() const { return n_hard ? double(noisy_hard) / double(n_hard) : 0.0; }
    double noise_rate_all() const {
        const auto n = n_easy + n_hard;
        return n ? double(noisy_easy + noisy_hard) / double(n) : 0.0;
    }
};

/// Counts pseudo-label errors against ground truth in each half of the split.
SplitQuality split_quality_report(const SplitResult& split, const PseudoLabeledSet& pseudo,
                                  const data::PUDataset& dataset, const data::Oracle& oracle, double tau);
/// Throws data::LabelLeakError unless analysis_mode is set.
SplitQuality split_quality_report(const SplitResult& split, const PseudoLabeledSet& pseudo,
                                  const data::PUDataset& dataset, bool analysis_mode, double tau);

struct SplitReportRow {
    double tau = 0.0;
    std::size_t stop_epoch = 0;
    std::size_t n_easy = 0;
    std::size_t n_hard = 0;
    std::optional<std::size_t> noisy_easy;
    std::optional<std::size_t> noisy_hard;
};

/// CSV: tau,stop_epoch,n_easy,n_hard,noisy_easy,noisy_hard (noise columns
/// blank unless produced in analysis mode).
void write_split_report(const std::filesystem::path& path, std::span<const SplitReportRow> rows);

}  // namespace splitpu::splitter
