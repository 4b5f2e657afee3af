#include "splitpu/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace splitpu::losses {

namespace {

void require_distribution_pair(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ad::ShapeError(std::string(op) + ": shape mismatch " + ad::to_string(a.shape()) + " vs " +
                             ad::to_string(b.shape()));
    }
}

}  // namespace

void ConsistencyWeights::validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie strictly inside (0,1)");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be nonnegative");
}

Tensor soft_cross_entropy(const Tensor& probs, const Tensor& targets) {
    require_distribution_pair("soft_cross_entropy", probs, targets);
    const Tensor per_row = ad::row_sum(ad::mul(ad::stop_gradient(targets), ad::log(probs)));
    return ad::neg(ad::mean(per_row));
}

Tensor djs_rows(const Tensor& probs, const Tensor& targets, double rho) {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw std::invalid_argument("djs_loss: rho must lie strictly inside (0,1), got " + std::to_string(rho));
    }
    require_distribution_pair("djs_loss", probs, targets);
    const Tensor y = ad::stop_gradient(targets);
    const Tensor m = ad::add(ad::scale(probs, rho), ad::scale(y, 1.0 - rho));
    const Tensor js = ad::add(ad::scale(ad::kl_divergence(probs, m), rho),
                              ad::scale(ad::kl_divergence(y, m), 1.0 - rho));
    const double normalizer = -(1.0 - rho) * std::log(1.0 - rho);
    return ad::scale(js, 1.0 / normalizer);
}

Tensor djs_loss(const Tensor& probs, const Tensor& targets, double rho) {
    return ad::mean(djs_rows(probs, targets, rho));
}

Tensor harden(const Tensor& targets) {
    if (targets.shape().size() != 2 || targets.shape()[1] != 2) {
        throw ad::ShapeError("harden: expected [n,2], got " + ad::to_string(targets.shape()));
    }
    std::vector<double> out(targets.size());
    for (std::size_t r = 0; r < targets.rows(); ++r) {
        const bool pos = targets[2 * r] >= targets[2 * r + 1];
        out[2 * r] = pos ? 1.0 : 0.0;
        out[2 * r + 1] = pos ? 0.0 : 1.0;
    }
    return Tensor::constant(targets.shape(), std::move(out));
}

Tensor cross_consistency(const Tensor& student_first, const Tensor& teacher_first) {
    require_distribution_pair("cross_consistency", student_first, teacher_first);
    return ad::mean(ad::row_l2_norm(ad::sub(student_first, ad::stop_gradient(teacher_first))));
}

Tensor pred_consistency(const Tensor& weak_probs, const Tensor& strong_probs, KlDirection direction) {
    require_distribution_pair("pred_consistency", weak_probs, strong_probs);
    if (direction == KlDirection::WeakTarget) {
        return ad::mean(ad::kl_divergence(ad::stop_gradient(weak_probs), strong_probs));
    }
    return ad::mean(ad::kl_divergence(ad::stop_gradient(strong_probs), weak_probs));
}

Tensor feat_consistency(const Tensor& weak_feat, const Tensor& strong_feat, const PredictorHead& head,
                        bool stop_gradient, double eps) {
    require_distribution_pair("feat_consistency", weak_feat, strong_feat);
    const auto target = [stop_gradient](const Tensor& t) { return stop_gradient ? ad::stop_gradient(t) : t; };
    const Tensor d1 = ad::neg(ad::cosine_similarity(target(weak_feat), head(strong_feat), eps));
    const Tensor d2 = ad::neg(ad::cosine_similarity(target(strong_feat), head(weak_feat), eps));
    return ad::mean(ad::scale(ad::add(d1, d2), 0.5));
}

HardLoss hard_loss(const Tensor& weak_view, const Tensor& strong_view, const Network& student, const Network& teacher,
                   const PredictorHead& head, const ConsistencyWeights& weights, const HardLossOptions& options) {
    HardLoss out;
    const Taps weak = student.forward_with_taps(weak_view);
    if (options.terms != HardTerms::SelfOnly) {
        Tensor teacher_first;
        {
            ad::NoGradGuard guard;
            teacher_first = teacher.forward_with_taps(weak_view).first;
        }
        out.cross = cross_consistency(weak.first, teacher_first);
    }
    if (options.terms != HardTerms::CrossOnly) {
        const Taps strong = student.forward_with_taps(strong_view);
        out.pred = pred_consistency(predict_prob(weak.logit), predict_prob(strong.logit), options.direction);
        out.feat = feat_consistency(weak.last, strong.last, head, options.feat_stop_gradient, options.eps);
    }
    switch (options.terms) {
        case HardTerms::CrossOnly:
            out.total = out.cross;
            break;
        case HardTerms::SelfOnly:
            out.total = ad::add(ad::scale(out.pred, weights.alpha), ad::scale(out.feat, weights.beta));
            break;
        case HardTerms::Dual:
            out.total = ad::add(out.cross,
                                ad::add(ad::scale(out.pred, weights.alpha), ad::scale(out.feat, weights.beta)));
            break;
    }
    return out;
}

}  // namespace splitpu::losses
