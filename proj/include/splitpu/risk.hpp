#pragma once

#include <span>

#include "splitpu/autodiff.hpp"

namespace splitpu::risk {

using ad::Tensor;

enum class Estimator { NnPU, UPU };

/// How the positives-as-negative term is averaged. ByPositives is the
/// canonical nnPU estimator; ByUnlabeled divides the sum over positives by
/// n_u, reproducing the literal printed variant for comparison.
enum class PositiveNegNorm { ByPositives, ByUnlabeled };

/// Sigmoid surrogate sigma(-target * logit), target in {+1, -1}.
double base_loss(double logit, int target);
Tensor base_loss(const Tensor& logits, int target);

struct RiskComponents {
    double pos_risk = 0.0;      // mean L(z, +1) over positives
    double unl_neg_risk = 0.0;  // mean L(z, -1) over unlabeled
    double pos_neg_risk = 0.0;  // L(z, -1) over positives, normalized per PositiveNegNorm
    double prior = 0.5;

    double correction() const { return unl_neg_risk - prior * pos_neg_risk; }
    bool clamp_engaged() const { return correction() < 0.0; }
    double upu() const { return prior * pos_risk + correction(); }
    double nnpu() const { return prior * pos_risk + (correction() > 0.0 ? correction() : 0.0); }
};

RiskComponents risk_components(std::span<const double> pos_logits, std::span<const double> unl_logits, double prior,
                               PositiveNegNorm norm = PositiveNegNorm::ByPositives);

/// pi * R_p^+ + max{0, R_u^- - pi * R_p^-}
Tensor nnpu_loss(const Tensor& pos_logits, const Tensor& unl_logits, double prior,
                 PositiveNegNorm norm = PositiveNegNorm::ByPositives);
/// pi * R_p^+ + R_u^- - pi * R_p^-  (may be negative)
Tensor upu_loss(const Tensor& pos_logits, const Tensor& unl_logits, double prior,
                PositiveNegNorm norm = PositiveNegNorm::ByPositives);
Tensor pu_risk(Estimator estimator, const Tensor& pos_logits, const Tensor& unl_logits, double prior,
               PositiveNegNorm norm = PositiveNegNorm::ByPositives);

}  // namespace splitpu::risk
