#pragma once

#include <cmath>
#include <vector>

#include "recomp/nn/layers.hpp"

namespace recomp::nn {

/// Adaptive-moment optimizer over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, double lr = 1e-3, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto* p : params_) {
      m_.emplace_back(p->value.size(), T{0});
      v_.emplace_back(p->value.size(), T{0});
    }
  }

  void zero_grad() {
    for (auto* p : params_) std::fill(p->grad.begin(), p->grad.end(), T{0});
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    const double step = lr_ * std::sqrt(c2) / c1;
    const double eps_hat = eps_ * std::sqrt(c2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = static_cast<T>(beta1_ * m[j] + (1.0 - beta1_) * g);
        v[j] = static_cast<T>(beta2_ * v[j] + (1.0 - beta2_) * g * g);
        p.value[j] -= static_cast<T>(step * m[j] / (std::sqrt(static_cast<double>(v[j])) + eps_hat));
      }
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter<T>*> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace recomp::nn
