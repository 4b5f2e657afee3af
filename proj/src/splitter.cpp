#include "splitpu/splitter.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "splitpu/losses.hpp"
#include "splitpu/optim.hpp"
#include "splitpu/seeding.hpp"

namespace splitpu::splitter {

namespace {

constexpr std::size_t kInferenceBatch = 512;

}  // namespace

Tensor PseudoLabeledSet::rows(std::span<const std::size_t> indices, bool one_hot) const {
    std::vector<double> out;
    out.reserve(indices.size() * 2);
    for (auto i : indices) {
        if (one_hot) {
            const bool pos = hard_label(i) == +1;
            out.push_back(pos ? 1.0 : 0.0);
            out.push_back(pos ? 0.0 : 1.0);
        } else {
            out.push_back(soft[2 * i]);
            out.push_back(soft[2 * i + 1]);
        }
    }
    return Tensor::constant({indices.size(), 2}, std::move(out));
}

std::vector<double> predict_logits(const Network& model, const Shape& shape, std::span<const double> samples) {
    const std::size_t sz = ad::numel(shape);
    const std::size_t n = sz ? samples.size() / sz : 0;
    std::vector<double> out;
    out.reserve(n);
    ad::NoGradGuard guard;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += kInferenceBatch) {
        const std::size_t stop = std::min(n, start + kInferenceBatch);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor z = model.logits(data::make_batch(shape, samples, idx));
        out.insert(out.end(), z.data().begin(), z.data().end());
    }
    return out;
}

std::vector<int> predict_labels(const Network& model, const Shape& shape, std::span<const double> samples) {
    const auto z = predict_logits(model, shape, samples);
    std::vector<int> out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [](double v) { return v >= 0.0 ? +1 : -1; });
    return out;
}

PseudoLabeledSet pseudo_label(const Network& teacher, const Shape& shape, std::span<const double> unlabeled) {
    PseudoLabeledSet out;
    const auto z = predict_logits(teacher, shape, unlabeled);
    out.soft.reserve(2 * z.size());
    for (double v : z) {
        const auto p = predict_prob(v);
        out.soft.push_back(p[0]);
        out.soft.push_back(p[1]);
    }
    return out;
}

double agreement(const Network& model, const PseudoLabeledSet& pseudo, const Shape& shape,
                 std::span<const double> unlabeled) {
    const auto labels = predict_labels(model, shape, unlabeled);
    if (labels.size() != pseudo.size()) throw std::invalid_argument("agreement: pseudo-label count mismatch");
    if (labels.empty()) return 1.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) agree += labels[i] == pseudo.hard_label(i);
    return static_cast<double>(agree) / static_cast<double>(labels.size());
}

TempResult train_temporary(Network temp, const PseudoLabeledSet& pseudo, const Shape& shape,
                           std::span<const double> unlabeled, const TempConfig& config) {
    const std::size_t n = pseudo.size();
    if (n == 0) throw std::invalid_argument("train_temporary: empty unlabeled set");
    if (config.batch_size == 0) throw std::invalid_argument("train_temporary: batch size must be positive");

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, SeedStream::TempShuffle));
    data::AugmentationPipeline weak(data::AugmentKind::Weak, config.augment_params,
                                    derive_seed(config.seed, SeedStream::TempAugment));
    std::vector<Tensor> params(temp.parameters().begin(), temp.parameters().end());
    optim::SgdMomentum opt(params, config.lr, config.momentum);

    TempResult result{std::move(temp), {}, {}, 0, false};
    result.agreement.push_back(agreement(result.temp, pseudo, shape, unlabeled));
    result.loss.push_back(std::numeric_limits<double>::quiet_NaN());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, n - start));
            const Tensor x = data::make_batch(shape, unlabeled, idx, config.augment ? &weak : nullptr);
            const Tensor loss = losses::soft_cross_entropy(predict_prob(result.temp.logits(x)), pseudo.rows(idx));
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            total += loss.item();
            ++steps;
        }
        result.loss.push_back(total / static_cast<double>(steps));
        result.agreement.push_back(agreement(result.temp, pseudo, shape, unlabeled));
        result.stop_epoch = epoch;
        if (result.agreement.back() > config.tau) {
            result.reached_tau = true;
            break;
        }
    }
    return result;
}

TempResult train_temporary_fresh(const Network& teacher, const PseudoLabeledSet& pseudo, const Shape& shape,
                                 std::span<const double> unlabeled, const TempConfig& config) {
    Network fresh(teacher.architecture(), derive_seed(config.seed, SeedStream::TempInit));
    return train_temporary(std::move(fresh), pseudo, shape, unlabeled, config);
}

SplitResult early_stop_split(const Network& temp, const PseudoLabeledSet& pseudo, const Shape& shape,
                             std::span<const double> unlabeled, std::size_t stop_epoch, bool reached_tau) {
    const auto labels = predict_labels(temp, shape, unlabeled);
    if (labels.size() != pseudo.size()) throw std::invalid_argument("early_stop_split: pseudo-label count mismatch");
    SplitResult split;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == pseudo.hard_label(i) ? split.easy : split.hard).push_back(i);
    }
    split.stop_epoch = stop_epoch;
    split.reached_tau = reached_tau;
    split.stop_accuracy =
        labels.empty() ? 1.0 : static_cast<double>(split.easy.size()) / static_cast<double>(labels.size());
    return split;
}

void check_partition(const SplitResult& split, std::size_t n_unlabeled) {
    if (split.size() != n_unlabeled) {
        throw std::logic_error("split covers " + std::to_string(split.size()) + " samples, expected " +
                               std::to_string(n_unlabeled));
    }
    std::vector<char> seen(n_unlabeled, 0);
    for (const auto* part : {&split.easy, &split.hard}) {
        for (auto i : *part) {
            if (i >= n_unlabeled || seen[i]) throw std::logic_error("split assigns sample " + std::to_string(i) + " twice");
            seen[i] = 1;
        }
    }
}

SplitResult all_easy_split(std::size_t n_unlabeled) {
    SplitResult split;
    split.easy.resize(n_unlabeled);
    std::iota(split.easy.begin(), split.easy.end(), 0);
    return split;
}

SplitQuality split_quality_report(const SplitResult& split, const PseudoLabeledSet& pseudo,
                                  const data::PUDataset& dataset, const data::Oracle& oracle, double tau) {
    const auto truth = dataset.hidden_labels(oracle);
    if (truth.size() != pseudo.size() || split.size() != pseudo.size()) {
        throw std::invalid_argument("split_quality_report: split, pseudo-labels and dataset disagree in size");
    }
    SplitQuality q;
    q.tau = tau;
    q.stop_epoch = split.stop_epoch;
    q.n_easy = split.easy.size();
    q.n_hard = split.hard.size();
    for (auto i : split.easy) q.noisy_easy += pseudo.hard_label(i) != truth[i];
    for (auto i : split.hard) q.noisy_hard += pseudo.hard_label(i) != truth[i];
    return q;
}

SplitQuality split_quality_report(const SplitResult& split, const PseudoLabeledSet& pseudo,
                                  const data::PUDataset& dataset, bool analysis_mode, double tau) {
    return split_quality_report(split, pseudo, dataset, data::Oracle::grant(analysis_mode), tau);
}

namespace {

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_split_report(const std::filesystem::path& path, std::span<const SplitReportRow> rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "tau,stop_epoch,n_easy,n_hard,noisy_easy,noisy_hard\n";
    for (const auto& r : rows) {
        f << shortest(r.tau) << ',' << r.stop_epoch << ',' << r.n_easy << ',' << r.n_hard << ',';
        if (r.noisy_easy) f << *r.noisy_easy;
        f << ',';
        if (r.noisy_hard) f << *r.noisy_hard;
        f << '\n';
    }
}

}  // namespace splitpu::splitter
