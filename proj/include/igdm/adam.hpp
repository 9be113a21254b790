#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/matrix.hpp"

namespace igdm {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over a flat list of parameter matrices. Moment
// shapes are locked to the first step() call.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  void step(std::vector<DenseMatrix*> params, const std::vector<const DenseMatrix*>& grads) {
    if (params.size() != grads.size()) {
      throw ContractError("adam: " + std::to_string(params.size()) + " params vs " +
                          std::to_string(grads.size()) + " grads");
    }
    if (m_.empty()) {
      for (const DenseMatrix* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    if (m_.size() != params.size()) {
      throw ContractError("adam: parameter count changed mid-run");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t k = 0; k < params.size(); ++k) {
      DenseMatrix& p = *params[k];
      const DenseMatrix& g = *grads[k];
      if (!p.same_shape(g)) {
        throw ContractError("adam: param " + p.shape_str() + " vs grad " + g.shape_str());
      }
      if (!g.all_finite()) {
        throw NumericError("adam: non-finite gradient in parameter " + std::to_string(k) +
                           " (" + g.shape_str() + ") at step " + std::to_string(step_));
      }
      DenseMatrix& m = m_[k];
      DenseMatrix& v = v_[k];
      for (size_t i = 0; i < p.size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = cfg_.beta1 * m.data()[i] + (1.0 - cfg_.beta1) * gi;
        v.data()[i] = cfg_.beta2 * v.data()[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m.data()[i] / bc1;
        const double vhat = v.data()[i] / bc2;
        p.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<DenseMatrix> m_;
  std::vector<DenseMatrix> v_;
};

}  // namespace igdm
