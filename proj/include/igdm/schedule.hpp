#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"

namespace igdm {

// Linear schedule on 1 - alpha_bar_t:
//   1 - alpha_bar_t = s * [alpha_min + (t-1)/(T-1) * (alpha_max - alpha_min)]
// with alpha_bar_0 := 1. Keeps the derived per-step alphas, posterior
// variances and loss weights.
class DiffusionSchedule {
 public:
  DiffusionSchedule(int steps, double noise_scale, double alpha_min, double alpha_max)
      : steps_(steps), noise_scale_(noise_scale), alpha_min_(alpha_min), alpha_max_(alpha_max) {
    if (steps < 1) throw ConfigError("schedule: T must be >= 1, got " + std::to_string(steps));
    if (!(alpha_min > 0.0 && alpha_min < alpha_max && alpha_max < 1.0)) {
      throw ConfigError("schedule: need 0 < alpha_min < alpha_max < 1, got [" +
                        std::to_string(alpha_min) + ", " + std::to_string(alpha_max) + "]");
    }
    if (!(noise_scale > 0.0 && noise_scale <= 1.0)) {
      throw ConfigError("schedule: noise scale s must lie in (0,1], got " +
                        std::to_string(noise_scale));
    }
    alpha_bar_.assign(steps + 1, 1.0);
    alpha_.assign(steps + 1, 1.0);
    beta_tilde_.assign(steps + 1, 0.0);
    loss_weight_.assign(steps + 1, 0.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
      const double one_minus = noise_scale * (alpha_min + frac * (alpha_max - alpha_min));
      alpha_bar_[t] = 1.0 - one_minus;
      alpha_[t] = alpha_bar_[t] / alpha_bar_[t - 1];
      beta_tilde_[t] = (1.0 - alpha_[t]) * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
      if (t == 1) {
        loss_weight_[t] = 1.0;
      } else {
        loss_weight_[t] = 0.5 * (alpha_bar_[t - 1] / (1.0 - alpha_bar_[t - 1]) -
                                 alpha_bar_[t] / (1.0 - alpha_bar_[t]));
      }
    }
    for (int t = 1; t <= steps; ++t) {
      if (1.0 - alpha_bar_[t] <= 1.0 - alpha_bar_[t - 1]) {
        throw ConfigError("schedule: 1 - alpha_bar must increase strictly in t");
      }
      if (loss_weight_[t] <= 0.0) {
        throw ConfigError("schedule: loss weight must stay positive at t=" + std::to_string(t));
      }
    }
  }

  int steps() const { return steps_; }
  double noise_scale() const { return noise_scale_; }
  double alpha_min() const { return alpha_min_; }
  double alpha_max() const { return alpha_max_; }

  double alpha_bar(int t) const { return alpha_bar_[check(t, 0)]; }
  double alpha(int t) const { return alpha_[check(t, 1)]; }
  double beta_tilde(int t) const { return beta_tilde_[check(t, 1)]; }
  double loss_weight(int t) const { return loss_weight_[check(t, 1)]; }

  // Coefficients of the deterministic one-step reverse update
  //   x_{t-1} = reverse_coef_xt(t) * x_t + reverse_coef_x0(t) * x0_estimate.
  double reverse_coef_xt(int t) const {
    check(t, 1);
    return std::sqrt(alpha_[t]) * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
  }
  double reverse_coef_x0(int t) const {
    check(t, 1);
    return std::sqrt(alpha_bar_[t - 1]) * (1.0 - alpha_[t]) / (1.0 - alpha_bar_[t]);
  }

 private:
  int check(int t, int lo) const {
    if (t < lo || t > steps_) {
      throw ContractError("schedule: step " + std::to_string(t) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(steps_) + "]");
    }
    return t;
  }

  int steps_;
  double noise_scale_;
  double alpha_min_;
  double alpha_max_;
  std::vector<double> alpha_bar_;
  std::vector<double> alpha_;
  std::vector<double> beta_tilde_;
  std::vector<double> loss_weight_;
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, eps ~ N(0, I).
inline DenseMatrix forward_noise(const DenseMatrix& x0, int t, const DiffusionSchedule& schedule,
                                 Rng& rng) {
  const double signal = std::sqrt(schedule.alpha_bar(t));
  const double noise = std::sqrt(1.0 - schedule.alpha_bar(t));
  DenseMatrix out = x0;
  for (double& v : out.data()) v = signal * v + noise * rng.normal();
  return out;
}

}  // namespace igdm
