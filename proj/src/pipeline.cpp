#include "splitpu/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "splitpu/optim.hpp"
#include "splitpu/seeding.hpp"

namespace splitpu::pipeline {

namespace {

template <typename E>
struct Named {
    E value;
    const char* name;
};

constexpr Named<EasyLoss> kEasyNames[] = {
    {EasyLoss::SoftDJS, "soft-djs"}, {EasyLoss::HardDJS, "hard-djs"}, {EasyLoss::SoftCE, "soft-ce"},
    {EasyLoss::HardCE, "hard-ce"}};
constexpr Named<HardLoss> kHardNames[] = {{HardLoss::None, "none"},
                                          {HardLoss::NnPU, "nnpu"},
                                          {HardLoss::Self, "self"},
                                          {HardLoss::Cross, "cross"},
                                          {HardLoss::Dual, "dual"}};
constexpr Named<ConsistencyScope> kScopeNames[] = {{ConsistencyScope::Hard, "hard"}, {ConsistencyScope::All, "all"}};
constexpr Named<risk::Estimator> kEstimatorNames[] = {{risk::Estimator::NnPU, "nnpu"}, {risk::Estimator::UPU, "upu"}};
constexpr Named<losses::KlDirection> kDirectionNames[] = {{losses::KlDirection::WeakTarget, "weak-target"},
                                                         {losses::KlDirection::StrongTarget, "strong-target"}};

template <typename E, std::size_t N>
std::string name_of(const Named<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "?";
}

template <typename E, std::size_t N>
E parse_named(const Named<E> (&table)[N], const std::string& s, const char* what) {
    for (const auto& e : table)
        if (s == e.name) return e.value;
    std::string allowed;
    for (const auto& e : table) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
    throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "' (expected one of: " + allowed + ")");
}

// Cycles through 0..n-1 in a fresh random order per pass.
class CyclicSampler {
  public:
    CyclicSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), 0);
        std::shuffle(order_.begin(), order_.end(), rng_);
    }
    std::vector<std::size_t> next(std::size_t k) {
        std::vector<std::size_t> out;
        out.reserve(k);
        while (out.size() < k && !order_.empty()) {
            if (pos_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

  private:
    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
    std::size_t pos_ = 0;
};

struct StreamItem {
    bool labeled_positive;
    std::size_t index;
};

Tensor gather(const data::PUDataset& d, std::span<const StreamItem> items, data::AugmentationPipeline* aug) {
    const auto& shape = d.sample_shape();
    std::vector<double> buf;
    buf.reserve(items.size() * d.sample_size());
    for (const auto& it : items) {
        const auto s = it.labeled_positive ? d.positive(it.index) : d.unlabeled(it.index);
        if (aug) {
            const auto v = (*aug)(shape, s);
            buf.insert(buf.end(), v.begin(), v.end());
        } else {
            buf.insert(buf.end(), s.begin(), s.end());
        }
    }
    Shape batch{items.size()};
    batch.insert(batch.end(), shape.begin(), shape.end());
    return Tensor::constant(std::move(batch), std::move(buf));
}

void check_finite(double loss, const char* phase, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        throw DivergenceError(std::string(phase) + " training diverged at epoch " + std::to_string(epoch) +
                              " (loss = " + std::to_string(loss) + ")");
    }
}

double full_risk(const Network& net, const data::PUDataset& d, const TrainPhaseConfig& c) {
    const auto zp = splitter::predict_logits(net, d.sample_shape(), d.positives());
    const auto zu = splitter::predict_logits(net, d.sample_shape(), d.unlabeled());
    const auto rc = risk::risk_components(zp, zu, d.prior(), c.positive_norm);
    return c.estimator == risk::Estimator::NnPU ? rc.nnpu() : rc.upu();
}

bool uses_head(HardLoss h) { return h == HardLoss::Self || h == HardLoss::Dual; }

}  // namespace

std::string to_string(EasyLoss v) { return name_of(kEasyNames, v); }
std::string to_string(HardLoss v) { return name_of(kHardNames, v); }
std::string to_string(ConsistencyScope v) { return name_of(kScopeNames, v); }
std::string to_string(risk::Estimator v) { return name_of(kEstimatorNames, v); }
std::string to_string(losses::KlDirection v) { return name_of(kDirectionNames, v); }
EasyLoss parse_easy_loss(const std::string& s) { return parse_named(kEasyNames, s, "easy loss"); }
HardLoss parse_hard_loss(const std::string& s) { return parse_named(kHardNames, s, "hard loss"); }
ConsistencyScope parse_scope(const std::string& s) { return parse_named(kScopeNames, s, "consistency scope"); }
risk::Estimator parse_estimator(const std::string& s) { return parse_named(kEstimatorNames, s, "risk estimator"); }
losses::KlDirection parse_kl_direction(const std::string& s) {
    return parse_named(kDirectionNames, s, "KL direction");
}

void TrainPhaseConfig::validate() const {
    if (base_epochs == 0) throw std::invalid_argument("base epochs must be positive");
    if (student_epochs == 0) throw std::invalid_argument("student epochs must be positive");
    if (temp_max_epochs == 0) throw std::invalid_argument("temporary-model max epochs must be positive");
    if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
    if (!(base_lr > 0.0 && student_lr > 0.0 && temp_lr > 0.0)) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (!(temp_momentum >= 0.0 && temp_momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0,1]");
    weights.validate();
}

double RunReport::accuracy_at(std::size_t iteration) const {
    if (iteration == 0) return base_accuracy;
    if (iteration > iterations.size()) throw std::out_of_range("no such iteration in run report");
    return iterations[iteration - 1].test_accuracy;
}

double evaluate(const Network& model, const data::LabeledSet& test) {
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    const auto pred = splitter::predict_labels(model, test.sample_shape, test.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

Architecture architecture_for(const data::PUDataset& dataset, const TrainPhaseConfig& config) {
    const auto& s = dataset.sample_shape();
    if (s.size() == 1) return Architecture::mlp(s[0], config.mlp_hidden);
    if (s.size() == 3) return Architecture::cnn(s[0], s[1], s[2]);
    throw ad::ShapeError("no model for sample shape " + ad::to_string(s));
}

Network train_base(const data::PUDataset& d, const TrainPhaseConfig& c, std::uint64_t seed,
                   std::vector<EpochRecord>* curve) {
    c.validate();
    const std::size_t n_p = d.num_positive(), n_u = d.num_unlabeled();
    if (n_p == 0 || n_u == 0) throw std::invalid_argument("train_base: need positives and unlabeled samples");

    const double share = static_cast<double>(n_p) / static_cast<double>(n_p + n_u);
    const std::size_t b_p = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(c.batch_size) * share)), 1, c.batch_size - 1);
    const std::size_t b_u = c.batch_size - b_p;

    Network net(architecture_for(d, c), derive_seed(seed, SeedStream::BaseInit));
    std::vector<Tensor> params(net.parameters().begin(), net.parameters().end());
    optim::Adam opt(params, c.base_lr);
    std::mt19937_64 shuffle_rng(derive_seed(seed, SeedStream::BaseShuffle));
    CyclicSampler positives(n_p, derive_seed(seed, SeedStream::BaseShuffle, 1));
    data::AugmentationPipeline weak(data::AugmentKind::Weak, c.augment, derive_seed(seed, SeedStream::BaseAugment));
    data::AugmentationPipeline* aug = c.augment_base ? &weak : nullptr;

    if (curve) curve->push_back({0, "base", 0, full_risk(net, d, c), std::nullopt});

    std::vector<std::size_t> order(n_u);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= c.base_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n_u; start += b_u) {
            const std::span<const std::size_t> u_idx(order.data() + start, std::min(b_u, n_u - start));
            const auto p_idx = positives.next(b_p);
            const Tensor zp = net.logits(data::make_batch(d.sample_shape(), d.positives(), p_idx, aug));
            const Tensor zu = net.logits(data::make_batch(d.sample_shape(), d.unlabeled(), u_idx, aug));
            const Tensor loss = risk::pu_risk(c.estimator, zp, zu, d.prior(), c.positive_norm);
            check_finite(loss.item(), "base", epoch);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            total += loss.item();
            ++steps;
        }
        if (curve) curve->push_back({0, "base", epoch, total / static_cast<double>(steps), std::nullopt});
    }
    return net;
}

StudentResult train_student(const Network& teacher, const splitter::SplitResult& split,
                            const splitter::PseudoLabeledSet& pseudo, const data::PUDataset& d,
                            const TrainPhaseConfig& c, std::uint64_t seed, std::size_t iteration,
                            std::vector<EpochRecord>* curve, std::vector<std::string>* warnings) {
    c.validate();
    if (pseudo.size() != d.num_unlabeled() || split.size() != d.num_unlabeled()) {
        throw std::invalid_argument("train_student: split / pseudo-labels do not cover the unlabeled set");
    }
    const Architecture arch = teacher.architecture();
    StudentResult out{Network(arch, derive_seed(seed, SeedStream::StudentInit, iteration)),
                      PredictorHead(arch.last_feature_dim(), derive_seed(seed, SeedStream::HeadInit, iteration))};
    Network& student = out.student;

    std::vector<StreamItem> easy;
    for (auto i : split.easy) easy.push_back({false, i});
    if (c.include_positives)
        for (std::size_t i = 0; i < d.num_positive(); ++i) easy.push_back({true, i});

    std::vector<std::size_t> hard;
    if (c.hard_loss != HardLoss::None) {
        if (c.consistency_scope == ConsistencyScope::All && c.hard_loss != HardLoss::NnPU) {
            hard.resize(d.num_unlabeled());
            std::iota(hard.begin(), hard.end(), 0);
        } else {
            hard = split.hard;
        }
        if (hard.empty() && warnings) {
            warnings->push_back("iteration " + std::to_string(iteration) + ": hard set empty, hard term skipped");
        }
    }
    if (easy.empty() && hard.empty()) throw std::invalid_argument("train_student: nothing to train on");

    const std::size_t B = c.batch_size;
    std::size_t b_h = 0, b_e = B;
    if (!hard.empty()) {
        if (easy.empty()) {
            b_h = B;
            b_e = 0;
        } else {
            const double share = static_cast<double>(hard.size()) / static_cast<double>(hard.size() + easy.size());
            b_h = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(B) * share)), 1,
                                          B - 1);
            b_e = B - b_h;
        }
    }
    const std::size_t steps_per_epoch =
        easy.empty() ? (hard.size() + b_h - 1) / b_h : (easy.size() + b_e - 1) / b_e;

    std::vector<Tensor> params(student.parameters().begin(), student.parameters().end());
    if (uses_head(c.hard_loss) && !hard.empty()) {
        params.insert(params.end(), out.head.parameters().begin(), out.head.parameters().end());
    }
    optim::Adam opt(params, c.student_lr);

    std::mt19937_64 shuffle_rng(derive_seed(seed, SeedStream::StudentShuffle, iteration));
    CyclicSampler hard_sampler(hard.size(), derive_seed(seed, SeedStream::StudentShuffle, 100 + iteration));
    CyclicSampler pos_sampler(d.num_positive(), derive_seed(seed, SeedStream::StudentShuffle, 200 + iteration));
    data::AugmentationPipeline weak(data::AugmentKind::Weak, c.augment,
                                    derive_seed(seed, SeedStream::StudentWeak, iteration));
    data::AugmentationPipeline strong(data::AugmentKind::Strong, c.augment,
                                      derive_seed(seed, SeedStream::StudentStrong, iteration));

    const bool one_hot = c.easy_loss == EasyLoss::HardDJS || c.easy_loss == EasyLoss::HardCE;
    losses::HardLossOptions hopts;
    hopts.terms = c.hard_loss == HardLoss::Cross  ? losses::HardTerms::CrossOnly
                  : c.hard_loss == HardLoss::Self ? losses::HardTerms::SelfOnly
                                                  : losses::HardTerms::Dual;
    hopts.direction = c.kl_direction;
    hopts.feat_stop_gradient = c.feat_stop_gradient;
    hopts.eps = 1e-12;  // a dead ReLU row must not abort training

    std::vector<StreamItem> easy_order = easy;
    for (std::size_t epoch = 1; epoch <= c.student_epochs; ++epoch) {
        std::shuffle(easy_order.begin(), easy_order.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            Tensor loss;
            if (b_e > 0) {
                const std::size_t start = step * b_e;
                const std::span<const StreamItem> items(easy_order.data() + start,
                                                        std::min(b_e, easy_order.size() - start));
                std::vector<double> targets;
                targets.reserve(2 * items.size());
                for (const auto& it : items) {
                    if (it.labeled_positive) {
                        targets.insert(targets.end(), {1.0, 0.0});
                    } else if (one_hot) {
                        const bool pos = pseudo.hard_label(it.index) == +1;
                        targets.insert(targets.end(), {pos ? 1.0 : 0.0, pos ? 0.0 : 1.0});
                    } else {
                        const auto p = pseudo[it.index];
                        targets.insert(targets.end(), {p[0], p[1]});
                    }
                }
                const Tensor y = Tensor::constant({items.size(), 2}, std::move(targets));
                const Tensor probs =
                    predict_prob(student.logits(gather(d, items, c.augment_student ? &weak : nullptr)));
                const bool djs = c.easy_loss == EasyLoss::SoftDJS || c.easy_loss == EasyLoss::HardDJS;
                loss = djs ? losses::djs_loss(probs, y, c.weights.rho) : losses::soft_cross_entropy(probs, y);
            }
            if (b_h > 0) {
                const auto picks = hard_sampler.next(b_h);
                std::vector<std::size_t> idx;
                idx.reserve(picks.size());
                for (auto k : picks) idx.push_back(hard[k]);
                Tensor term;
                if (c.hard_loss == HardLoss::NnPU) {
                    const auto p_idx = pos_sampler.next(b_h);
                    const Tensor zp = student.logits(data::make_batch(d.sample_shape(), d.positives(), p_idx, &weak));
                    const Tensor zh = student.logits(data::make_batch(d.sample_shape(), d.unlabeled(), idx, &weak));
                    term = risk::nnpu_loss(zp, zh, d.prior(), c.positive_norm);
                } else {
                    const Tensor wv = data::make_batch(d.sample_shape(), d.unlabeled(), idx, &weak);
                    const Tensor sv = data::make_batch(d.sample_shape(), d.unlabeled(), idx, &strong);
                    term = losses::hard_loss(wv, sv, student, teacher, out.head, c.weights, hopts).total;
                }
                loss = loss.defined() ? ad::add(loss, term) : term;
            }
            check_finite(loss.item(), "student", epoch);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            total += loss.item();
        }
        if (curve) {
            curve->push_back({iteration, "student", epoch, total / static_cast<double>(steps_per_epoch), std::nullopt});
        }
    }
    return out;
}

RunReport run_split_pu(const data::PUDataset& d, const TrainPhaseConfig& c, std::uint64_t seed,
                       const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.seed = seed;
    try {
        c.validate();
        Network teacher = train_base(d, c, seed, &report.curve);
        report.base_accuracy = evaluate(teacher, d.test());
        if (options.snapshot_dir) teacher.save(*options.snapshot_dir / "model_iter0.bin");

        for (std::size_t it = 1; it <= c.iterations; ++it) {
            const auto pseudo = splitter::pseudo_label(teacher, d.sample_shape(), d.unlabeled());
            splitter::SplitResult split;
            if (c.early_stop) {
                splitter::TempConfig tc;
                tc.tau = c.tau;
                tc.lr = c.temp_lr;
                tc.momentum = c.temp_momentum;
                tc.max_epochs = c.temp_max_epochs;
                tc.batch_size = c.batch_size;
                tc.augment = c.augment_temp;
                tc.augment_params = c.augment;
                tc.seed = derive_seed(seed, SeedStream::Temp, it);
                auto temp = splitter::train_temporary_fresh(teacher, pseudo, d.sample_shape(), d.unlabeled(), tc);
                for (std::size_t e = 1; e < temp.agreement.size(); ++e) {
                    report.curve.push_back({it, "temp", e, temp.loss[e], temp.agreement[e]});
                }
                if (!temp.reached_tau) {
                    report.warnings.push_back("iteration " + std::to_string(it) + ": temporary model stopped at " +
                                              std::to_string(temp.stop_epoch) + " epochs below tau");
                }
                split = splitter::early_stop_split(temp.temp, pseudo, d.sample_shape(), d.unlabeled(), temp.stop_epoch,
                                                   temp.reached_tau);
            } else {
                split = splitter::all_easy_split(d.num_unlabeled());
            }

            splitter::check_partition(split, d.num_unlabeled());
            const auto frozen = teacher.snapshot();
            auto student = train_student(teacher, split, pseudo, d, c, seed, it, &report.curve, &report.warnings);
            if (teacher.snapshot() != frozen) throw std::logic_error("teacher parameters changed during student training");

            IterationReport ir;
            ir.iteration = it;
            ir.test_accuracy = evaluate(student.student, d.test());
            ir.n_easy = split.easy.size();
            ir.n_hard = split.hard.size();
            ir.stop_epoch = split.stop_epoch;
            ir.stop_accuracy = split.stop_accuracy;
            ir.reached_tau = split.reached_tau;
            report.iterations.push_back(ir);
            if (options.snapshot_dir) student.student.save(*options.snapshot_dir / ("model_iter" + std::to_string(it) + ".bin"));
            teacher = std::move(student.student);
        }
    } catch (const std::exception& e) {
        report.failed = true;
        report.error = e.what();
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace splitpu::pipeline
