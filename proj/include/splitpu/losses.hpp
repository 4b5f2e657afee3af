#pragma once

#include "splitpu/autodiff.hpp"
#include "splitpu/models.hpp"

namespace splitpu::losses {

using ad::Tensor;

struct ConsistencyWeights {
    double rho = 0.7;    // DJS interpolation weight, in (0,1)
    double alpha = 0.3;  // prediction consistency
    double beta = 0.1;   // feature consistency

    void validate() const;
};

/// Mean over rows of -sum_c target_c * log(prob_c). Targets are constants.
Tensor soft_cross_entropy(const Tensor& probs, const Tensor& targets);

/// Per-row normalized Jensen-Shannon divergence between the prediction p and
/// the (constant) pseudo-label y:
///   m = rho*p + (1-rho)*y
///   [rho*KL(p||m) + (1-rho)*KL(y||m)] / (-(1-rho) * log(1-rho))
/// Shapes [n,2] -> [n] (or [2] -> scalar).
Tensor djs_rows(const Tensor& probs, const Tensor& targets, double rho);
/// Mean of djs_rows.
Tensor djs_loss(const Tensor& probs, const Tensor& targets, double rho);

/// Replaces each row of a [n,2] distribution by its one-hot argmax
/// (ties go to column 0, the positive class).
Tensor harden(const Tensor& targets);

/// Mean over rows of ||student - stop_gradient(teacher)||_2.
Tensor cross_consistency(const Tensor& student_first, const Tensor& teacher_first);

enum class KlDirection {
    WeakTarget,    // KL(sg(weak) || strong)
    StrongTarget,  // KL(sg(strong) || weak)
};

/// Mean KL between predictions of the weak and strong views.
Tensor pred_consistency(const Tensor& weak_probs, const Tensor& strong_probs,
                        KlDirection direction = KlDirection::WeakTarget);

/// Mean over rows of 1/2 D(weak, f(strong)) + 1/2 D(strong, f(weak)) with
/// D = -cosine. With stop_gradient the raw-feature side of each D is a
/// constant. eps == 0 rejects zero-norm features; eps > 0 floors norms.
Tensor feat_consistency(const Tensor& weak_feat, const Tensor& strong_feat, const PredictorHead& head,
                        bool stop_gradient = true, double eps = 0.0);

enum class HardTerms { Dual, CrossOnly, SelfOnly };

struct HardLossOptions {
    HardTerms terms = HardTerms::Dual;
    KlDirection direction = KlDirection::WeakTarget;
    bool feat_stop_gradient = true;
    double eps = 0.0;
};

struct HardLoss {
    Tensor cross;  // undefined when not part of `terms`
    Tensor pred;
    Tensor feat;
    Tensor total;
};

/// L_cross + alpha * L_pred + beta * L_feat on a batch of hard samples given
/// as weak and strong views. The teacher runs without gradient; its
/// first-layer features are taken on the weak view, same as the student's.
HardLoss hard_loss(const Tensor& weak_view, const Tensor& strong_view, const Network& student, const Network& teacher,
                   const PredictorHead& head, const ConsistencyWeights& weights, const HardLossOptions& options = {});

}  // namespace splitpu::losses
