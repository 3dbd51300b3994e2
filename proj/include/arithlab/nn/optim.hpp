#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "arithlab/nn/tensor.hpp"

namespace arithlab::nn {

struct AdamWParams {
  double lr = 8e-5;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

// Decoupled weight decay, bias-corrected moments.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWParams hp)
      : params_(std::move(params)), hp_(hp) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), T{0});
      v_.emplace_back(p.size(), T{0});
    }
  }

  // Applies one update from the currently accumulated grads. lr overrides
  // the base rate (schedules feed the per-step value).
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.grad_vec().empty()) continue;  // never touched by backward
      T* w = p.data();
      const T* g = p.grad_vec().data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const std::size_t n = p.size();
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = static_cast<double>(g[j]);
        if (!std::isfinite(gj)) throw std::runtime_error("non-finite gradient in AdamW step");
        const double mj = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * gj;
        const double vj = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        const double update = mhat / (std::sqrt(vhat) + hp_.eps) + hp_.weight_decay * w[j];
        w[j] = static_cast<T>(w[j] - lr * update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::int64_t steps_taken() const { return t_; }
  const AdamWParams& hyperparams() const { return hp_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  AdamWParams hp_;
  std::int64_t t_ = 0;
};

// Linear warmup from 0.01*LR to LR over the first fifth of training, then
// cosine annealing from LR down to 0.
struct Schedule {
  double base_lr = 8e-5;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 0;

  static Schedule standard(double base_lr, std::int64_t total_steps) {
    return {base_lr, total_steps / 5, total_steps};
  }

  void validate() const {
    if (warmup_steps > total_steps || total_steps <= 0)
      throw std::invalid_argument("schedule: warmup must not exceed total");
  }
};

inline double lr_at(std::int64_t step, const Schedule& s) {
  s.validate();
  if (step < 0 || step > s.total_steps) throw std::invalid_argument("lr_at: step out of range");
  if (s.warmup_steps > 0 && step < s.warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return s.base_lr * (0.01 + 0.99 * frac);
  }
  const auto span = static_cast<double>(s.total_steps - s.warmup_steps);
  const double frac = span > 0 ? static_cast<double>(step - s.warmup_steps) / span : 1.0;
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace arithlab::nn
