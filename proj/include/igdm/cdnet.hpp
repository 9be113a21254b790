#pragma once

#include <cmath>
#include <vector>

#include "igdm/init.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"
#include "igdm/tape.hpp"

namespace igdm {

inline constexpr int kTimeEmbedDim = 10;

// Sinusoidal embedding of the raw integer diffusion step.
inline DenseMatrix time_embedding(int t) {
  DenseMatrix emb(kTimeEmbedDim, 1);
  for (int i = 0; i < kTimeEmbedDim / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / kTimeEmbedDim);
    emb(2 * i, 0) = std::sin(t / freq);
    emb(2 * i + 1, 0) = std::cos(t / freq);
  }
  return emb;
}

// Conditional denoising network: linear codec around a one-hidden-layer MLP.
// The encoder is shared between the state x_t and the condition c. Without
// the codec (the w/o ED ablation) the MLP operates on raw |I|-dim vectors.
struct CdNetParams {
  int num_items = 0;
  int latent = 0;  // k_d, or |I| when the codec is absent
  bool use_codec = true;
  DenseMatrix encoder;  // k_d x |I|
  DenseMatrix decoder;  // |I| x k_d
  DenseMatrix w1;       // k_d x (2 k_d + 10)
  DenseMatrix b1;       // k_d x 1
  DenseMatrix w2;       // k_d x k_d
  DenseMatrix b2;       // k_d x 1

  static CdNetParams init(int num_items, int latent_dim, bool use_codec, Rng& rng) {
    CdNetParams p;
    p.num_items = num_items;
    p.use_codec = use_codec;
    p.latent = use_codec ? latent_dim : num_items;
    if (use_codec) {
      p.encoder = xavier_uniform(p.latent, num_items, rng);
      p.decoder = xavier_uniform(num_items, p.latent, rng);
    }
    p.w1 = xavier_uniform(p.latent, 2 * p.latent + kTimeEmbedDim, rng);
    p.b1 = DenseMatrix(p.latent, 1);
    p.w2 = xavier_uniform(p.latent, p.latent, rng);
    p.b2 = DenseMatrix(p.latent, 1);
    return p;
  }

  long parameter_count() const {
    long n = w1.size() + b1.size() + w2.size() + b2.size();
    if (use_codec) n += encoder.size() + decoder.size();
    return n;
  }

  std::vector<DenseMatrix*> parameters() {
    std::vector<DenseMatrix*> out;
    if (use_codec) {
      out.push_back(&encoder);
      out.push_back(&decoder);
    }
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
    return out;
  }
};

// Tape handles for one forward pass.
struct CdNetNodes {
  Tape::NodeId encoder = -1;
  Tape::NodeId decoder = -1;
  Tape::NodeId w1 = -1;
  Tape::NodeId b1 = -1;
  Tape::NodeId w2 = -1;
  Tape::NodeId b2 = -1;
  bool use_codec = true;
};

inline CdNetNodes bind_cdnet(Tape& tape, const CdNetParams& p, bool trainable) {
  CdNetNodes n;
  n.use_codec = p.use_codec;
  if (p.use_codec) {
    n.encoder = tape.leaf(p.encoder, trainable);
    n.decoder = tape.leaf(p.decoder, trainable);
  }
  n.w1 = tape.leaf(p.w1, trainable);
  n.b1 = tape.leaf(p.b1, trainable);
  n.w2 = tape.leaf(p.w2, trainable);
  n.b2 = tape.leaf(p.b2, trainable);
  return n;
}

// Columns of x_t and cond are items of one batch; time_embed carries one
// column per batch item. Returns the x0 prediction, one column per item.
inline Tape::NodeId cdnet_apply(Tape& tape, const CdNetNodes& n, Tape::NodeId x_t,
                                Tape::NodeId cond, Tape::NodeId time_embed) {
  const Tape::NodeId z = n.use_codec ? tape.matmul(n.encoder, x_t) : x_t;
  const Tape::NodeId c_hat = n.use_codec ? tape.matmul(n.encoder, cond) : cond;
  const Tape::NodeId cat = tape.concat_rows(z, tape.concat_rows(c_hat, time_embed));
  const Tape::NodeId hidden = tape.tanh(tape.add_colvec(tape.matmul(n.w1, cat), n.b1));
  const Tape::NodeId z_out = tape.add_colvec(tape.matmul(n.w2, hidden), n.b2);
  return n.use_codec ? tape.matmul(n.decoder, z_out) : z_out;
}

// Inference path: same tape graph with frozen leaves.
inline DenseMatrix cdnet_predict(const CdNetParams& p, const DenseMatrix& x_t,
                                 const DenseMatrix& cond, int t) {
  Tape tape;
  const CdNetNodes nodes = bind_cdnet(tape, p, /*trainable=*/false);
  DenseMatrix temb(kTimeEmbedDim, x_t.cols());
  const DenseMatrix one = time_embedding(t);
  for (int i = 0; i < kTimeEmbedDim; ++i)
    for (int j = 0; j < x_t.cols(); ++j) temb(i, j) = one(i, 0);
  const Tape::NodeId out = cdnet_apply(tape, nodes, tape.leaf(x_t), tape.leaf(cond), tape.leaf(temb));
  return tape.value(out);
}

}  // namespace igdm
