#include "splitpu/risk.hpp"

#include <cmath>
#include <stdexcept>

namespace splitpu::risk {

namespace {

void check_inputs(const Tensor& pos, const Tensor& unl, double prior) {
    if (!pos.defined() || pos.size() == 0) throw std::invalid_argument("PU risk: empty positive batch");
    if (!unl.defined() || unl.size() == 0) throw std::invalid_argument("PU risk: empty unlabeled batch");
    if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("PU risk: class prior outside (0,1)");
}

// Returns the three risk terms as graph nodes.
struct Terms {
    Tensor pos_risk, unl_neg_risk, pos_neg_risk;
};

Terms terms(const Tensor& pos, const Tensor& unl, PositiveNegNorm norm) {
    Terms t;
    t.pos_risk = ad::mean(base_loss(pos, +1));
    t.unl_neg_risk = ad::mean(base_loss(unl, -1));
    if (norm == PositiveNegNorm::ByPositives) {
        t.pos_neg_risk = ad::mean(base_loss(pos, -1));
    } else {
        t.pos_neg_risk = ad::scale(ad::sum(base_loss(pos, -1)), 1.0 / static_cast<double>(unl.size()));
    }
    return t;
}

}  // namespace

double base_loss(double logit, int target) {
    const double x = -static_cast<double>(target) * logit;
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor base_loss(const Tensor& logits, int target) {
    if (target != 1 && target != -1) throw std::invalid_argument("base_loss: target must be +1 or -1");
    return ad::sigmoid(ad::scale(logits, -static_cast<double>(target)));
}

RiskComponents risk_components(std::span<const double> pos_logits, std::span<const double> unl_logits, double prior,
                               PositiveNegNorm norm) {
    if (pos_logits.empty()) throw std::invalid_argument("PU risk: empty positive batch");
    if (unl_logits.empty()) throw std::invalid_argument("PU risk: empty unlabeled batch");
    if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("PU risk: class prior outside (0,1)");
    RiskComponents c;
    c.prior = prior;
    for (double z : pos_logits) {
        c.pos_risk += base_loss(z, +1);
        c.pos_neg_risk += base_loss(z, -1);
    }
    for (double z : unl_logits) c.unl_neg_risk += base_loss(z, -1);
    const double np = static_cast<double>(pos_logits.size());
    const double nu = static_cast<double>(unl_logits.size());
    c.pos_risk /= np;
    c.unl_neg_risk /= nu;
    c.pos_neg_risk /= (norm == PositiveNegNorm::ByPositives ? np : nu);
    return c;
}

Tensor nnpu_loss(const Tensor& pos_logits, const Tensor& unl_logits, double prior, PositiveNegNorm norm) {
    check_inputs(pos_logits, unl_logits, prior);
    const Terms t = terms(pos_logits, unl_logits, norm);
    const Tensor correction = ad::sub(t.unl_neg_risk, ad::scale(t.pos_neg_risk, prior));
    return ad::add(ad::scale(t.pos_risk, prior), ad::clamp_min(correction, 0.0));
}

Tensor upu_loss(const Tensor& pos_logits, const Tensor& unl_logits, double prior, PositiveNegNorm norm) {
    check_inputs(pos_logits, unl_logits, prior);
    const Terms t = terms(pos_logits, unl_logits, norm);
    const Tensor correction = ad::sub(t.unl_neg_risk, ad::scale(t.pos_neg_risk, prior));
    return ad::add(ad::scale(t.pos_risk, prior), correction);
}

Tensor pu_risk(Estimator estimator, const Tensor& pos_logits, const Tensor& unl_logits, double prior,
               PositiveNegNorm norm) {
    return estimator == Estimator::NnPU ? nnpu_loss(pos_logits, unl_logits, prior, norm)
                                        : upu_loss(pos_logits, unl_logits, prior, norm);
}

}  // namespace splitpu::risk
