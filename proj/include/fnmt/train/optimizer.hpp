// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "fnmt/model/layers.hpp"

namespace fnmt {

/// Linear warmup to `peak` at step `warmup`, then peak * sqrt(warmup / step).
/// Step 0 has rate 0. With warmup 0 the rate is `peak` from step 1 on.
inline double inverse_sqrt_lr(std::size_t step, double peak, std::size_t warmup) {
  if (step == 0) return 0.0;
  if (warmup == 0) return peak;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return step < warmup ? peak * s / w : peak * std::sqrt(w / s);
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Adam with bias correction. Moments are kept in double regardless of the
/// parameter precision.
template <typename T>
class Adam {
 public:
  Adam(ParameterSet<T>& params, AdamOptions opts = {}) : params_(&params), opts_(opts) {
    for (const auto& [_, t] : params) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  /// Applies one update from the accumulated gradients. Parameters with no
  /// gradient buffer are treated as having zero gradient.
  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& [_, p] : *params_) {
      auto& m = m_[k];
      auto& v = v_[k];
      ++k;
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto w = p.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * gi;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * gi * gi;
        const double mh = m[i] / c1, vh = v[i] / c2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mh / (std::sqrt(vh) + opts_.eps));
      }
    }
  }

 private:
  ParameterSet<T>* params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace fnmt
