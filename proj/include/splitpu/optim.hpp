#pragma once

#include <vector>

#include "splitpu/autodiff.hpp"

namespace splitpu::optim {

using ad::Tensor;

class Optimizer {
  public:
    explicit Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
    virtual ~Optimizer() = default;

    void zero_grad();
    virtual void step() = 0;

  protected:
    std::vector<Tensor> params_;
};

/// Adaptive moment estimation with bias correction.
class Adam final : public Optimizer {
  public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step() override;

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Heavy-ball SGD: v <- mu*v + g; w <- w - lr*v.
class SgdMomentum final : public Optimizer {
  public:
    SgdMomentum(std::vector<Tensor> params, double lr, double momentum = 0.9);
    void step() override;

  private:
    double lr_, momentum_;
    std::vector<std::vector<double>> velocity_;
};

}  // namespace splitpu::optim
