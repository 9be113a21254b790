#pragma once

#include <span>
#include <string>
#include <vector>

#include "igdm/adam.hpp"
#include "igdm/cdnet.hpp"
#include "igdm/graphs.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"
#include "igdm/schedule.hpp"
#include "igdm/tape.hpp"

namespace igdm {

struct GuidanceConfig {
  double omega = 2.0;  // strength of the behavioral condition at generation
  double p_mu = 0.1;   // probability of dropping the condition during training

  void validate() const {
    if (p_mu < 0.0 || p_mu > 1.0) {
      throw ConfigError("guidance: p_mu must lie in [0,1], got " + std::to_string(p_mu));
    }
  }
};

namespace detail {

inline DenseMatrix gather_columns(const DenseMatrix& m, std::span<const int> cols) {
  DenseMatrix out(m.rows(), static_cast<int>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j)
    for (int i = 0; i < m.rows(); ++i) out(i, static_cast<int>(j)) = m(i, cols[j]);
  return out;
}

}  // namespace detail

// Behavioral columns carry unbounded co-occurrence counts while semantic
// columns stay in [0,1]. Conditions are rescaled to unit max per column
// before encoding, in training and generation alike; the empty token stays 0.
inline DenseMatrix scale_condition_columns(const DenseMatrix& cond) {
  DenseMatrix out = cond;
  for (int j = 0; j < out.cols(); ++j) {
    double peak = 0.0;
    for (int i = 0; i < out.rows(); ++i) peak = std::max(peak, std::abs(out(i, j)));
    if (peak > 0.0) {
      for (int i = 0; i < out.rows(); ++i) out(i, j) /= peak;
    }
  }
  return out;
}

struct BgdLossGraph {
  CdNetNodes nodes;
  Tape::NodeId loss = -1;
};

// Loss graph shared by training and the gradient checks:
//   mean over batch of loss_weight(t_j) * ||x0_j - x0_hat_j||^2.
inline BgdLossGraph build_bgd_loss(Tape& tape, const CdNetParams& params, const DenseMatrix& x0,
                                   const DenseMatrix& x_t, const DenseMatrix& cond,
                                   const DenseMatrix& temb, const DenseMatrix& weights,
                                   bool trainable) {
  BgdLossGraph g;
  g.nodes = bind_cdnet(tape, params, trainable);
  const Tape::NodeId pred =
      cdnet_apply(tape, g.nodes, tape.leaf(x_t), tape.leaf(cond), tape.leaf(temb));
  const Tape::NodeId diff = tape.sub(tape.leaf(x0), pred);
  const Tape::NodeId weighted = tape.mul(tape.mul(diff, diff), tape.leaf(weights));
  g.loss = tape.scalar_mul(tape.sum_all(weighted), 1.0 / x0.cols());
  return g;
}

// One optimizer step on a batch of item columns. Per item: a uniform step t,
// the closed-form forward corruption of the semantic column, condition
// dropout with probability p_mu, and the weighted x0-reconstruction loss
// averaged over the batch.
inline double bgd_train_step(CdNetParams& params, AdamState& opt, const DenseMatrix& semantic,
                             const DenseMatrix& behavioral, std::span<const int> items,
                             const DiffusionSchedule& schedule, const GuidanceConfig& guidance,
                             Rng& rng) {
  guidance.validate();
  const int batch = static_cast<int>(items.size());
  if (batch == 0) throw ContractError("bgd_train_step: empty item batch");
  const DenseMatrix x0 = detail::gather_columns(semantic, items);
  DenseMatrix cond = scale_condition_columns(detail::gather_columns(behavioral, items));

  DenseMatrix x_t(x0.rows(), batch);
  DenseMatrix temb(kTimeEmbedDim, batch);
  DenseMatrix weights(x0.rows(), batch);
  for (int j = 0; j < batch; ++j) {
    const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<size_t>(schedule.steps())));
    const double signal = std::sqrt(schedule.alpha_bar(t));
    const double noise = std::sqrt(1.0 - schedule.alpha_bar(t));
    for (int i = 0; i < x0.rows(); ++i) {
      x_t(i, j) = signal * x0(i, j) + noise * rng.normal();
      weights(i, j) = schedule.loss_weight(t);
    }
    const DenseMatrix emb = time_embedding(t);
    for (int i = 0; i < kTimeEmbedDim; ++i) temb(i, j) = emb(i, 0);
    if (rng.bernoulli(guidance.p_mu)) {
      for (int i = 0; i < cond.rows(); ++i) cond(i, j) = 0.0;  // empty token
    }
  }

  Tape tape;
  const BgdLossGraph g = build_bgd_loss(tape, params, x0, x_t, cond, temb, weights, true);
  const CdNetNodes& nodes = g.nodes;
  const Tape::NodeId loss = g.loss;

  const double loss_value = tape.value(loss)(0, 0);
  if (!std::isfinite(loss_value)) {
    throw NumericError("bgd_train_step: non-finite loss");
  }
  tape.backward(loss);

  std::vector<Tape::NodeId> leaf_ids;
  if (params.use_codec) {
    leaf_ids.push_back(nodes.encoder);
    leaf_ids.push_back(nodes.decoder);
  }
  leaf_ids.push_back(nodes.w1);
  leaf_ids.push_back(nodes.b1);
  leaf_ids.push_back(nodes.w2);
  leaf_ids.push_back(nodes.b2);
  std::vector<const DenseMatrix*> grads;
  grads.reserve(leaf_ids.size());
  for (Tape::NodeId id : leaf_ids) grads.push_back(&tape.grad(id));
  opt.step(params.parameters(), grads);
  return loss_value;
}

// The affine guidance mix: (1 + omega) * conditional - omega * unconditional.
// omega = 0 and omega = -1 recover the pure conditional and unconditional
// predictions exactly.
inline DenseMatrix guidance_mix(const DenseMatrix& conditional, const DenseMatrix& unconditional,
                                double omega) {
  detail::require_same_shape(conditional, unconditional, "guidance_mix");
  DenseMatrix out(conditional.rows(), conditional.cols());
  for (size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = (1.0 + omega) * conditional.data()[i] - omega * unconditional.data()[i];
  }
  return out;
}

// Two CD-Net evaluations per call, one with the condition and one with the
// empty token.
inline DenseMatrix guided_predict(const CdNetParams& params, const DenseMatrix& x_t,
                                  const DenseMatrix& cond, int t, double omega) {
  const DenseMatrix with_cond = cdnet_predict(params, x_t, cond, t);
  const DenseMatrix without = cdnet_predict(params, x_t, DenseMatrix(cond.rows(), cond.cols()), t);
  return guidance_mix(with_cond, without, omega);
}

// Deterministic reverse pass over every item column at once. The start state
// is the clean semantic column itself (no forward corruption) and the
// posterior variance is ignored.
inline DenseMatrix reverse_generate_all(const CdNetParams& params, const DenseMatrix& semantic,
                                        const DenseMatrix& behavioral,
                                        const DiffusionSchedule& schedule, double omega) {
  const DenseMatrix cond = scale_condition_columns(behavioral);
  DenseMatrix x = semantic;
  for (int t = schedule.steps(); t >= 1; --t) {
    const DenseMatrix x0_hat = guided_predict(params, x, cond, t, omega);
    const double cx = schedule.reverse_coef_xt(t);
    const double c0 = schedule.reverse_coef_x0(t);
    for (size_t i = 0; i < x.size(); ++i) {
      x.data()[i] = cx * x.data()[i] + c0 * x0_hat.data()[i];
    }
  }
  return x;
}

// Single-column convenience used by tests and the exporter.
inline DenseMatrix reverse_generate(const CdNetParams& params, const DenseMatrix& semantic,
                                    const DenseMatrix& behavioral, int item,
                                    const DiffusionSchedule& schedule, double omega) {
  const int idx[1] = {item};
  const DenseMatrix x = detail::gather_columns(semantic, idx);
  const DenseMatrix c = detail::gather_columns(behavioral, idx);
  return reverse_generate_all(params, x, c, schedule, omega);
}

// S^d: per column, mark the k largest entries of the denoised relation
// vector (ties toward the smaller index).
inline DenseMatrix build_diffusion_graph(const DenseMatrix& denoised, int k) {
  if (k < 1) throw ConfigError("diffusion graph: k must be >= 1, got " + std::to_string(k));
  DenseMatrix adj(denoised.rows(), denoised.cols());
  for (int j = 0; j < denoised.cols(); ++j) {
    for (int i : detail::top_k_of_column(denoised, j, k)) adj(i, j) = 1.0;
  }
  return adj;
}

}  // namespace igdm
