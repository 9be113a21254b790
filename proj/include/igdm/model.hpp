#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "igdm/adam.hpp"
#include "igdm/bgd.hpp"
#include "igdm/cdnet.hpp"
#include "igdm/config.hpp"
#include "igdm/dataset.hpp"
#include "igdm/eval.hpp"
#include "igdm/graphs.hpp"
#include "igdm/init.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"
#include "igdm/schedule.hpp"
#include "igdm/sparse.hpp"
#include "igdm/tape.hpp"

namespace igdm {

struct EmbeddingTable {
  DenseMatrix user;  // |U| x d
  DenseMatrix item;  // |I| x d
};

inline EmbeddingTable init_embeddings(int num_users, int num_items, int dim, Rng& rng) {
  return {xavier_uniform(num_users, dim, rng), xavier_uniform(num_items, dim, rng)};
}

inline std::map<std::string, double> modality_weights(const std::vector<ModalityFeatures>& feats,
                                                      double phi_visual) {
  std::map<std::string, double> w;
  if (feats.size() == 1) {
    w[feats[0].modality] = 1.0;
    return w;
  }
  for (const auto& f : feats) {
    if (f.modality == "visual") {
      w["visual"] = phi_visual;
    } else if (f.modality == "textual") {
      w["textual"] = 1.0 - phi_visual;
    } else {
      throw ConfigError("unknown modality `" + f.modality + "`");
    }
  }
  return w;
}

// The static graph structures of one run. The diffusion graph is refreshed
// during training; everything else is frozen after construction.
struct ModelGraphs {
  bool has_item_graphs = false;
  DenseMatrix semantic_fused;  // S, the diffusion substrate (Eq. form: weighted KNN union)
  DenseMatrix behavioral;      // S^c, the diffusion condition
  SparseCsc prop_semantic;     // weighted sum of per-modality normalized graphs
  SparseCsc bipartite;         // normalized user-item adjacency
  DenseMatrix diffusion;       // S^d
  SparseCsc prop_diffusion;    // normalized S^d
};

inline ModelGraphs build_model_graphs(const RunConfig& cfg, const InteractionDataset& ds,
                                      const std::vector<ModalityFeatures>& features) {
  ModelGraphs g;
  g.bipartite = build_bipartite(ds);
  if (!cfg.use_item_graphs) return g;
  if (features.empty()) throw ConfigError("item graphs requested but no modality features given");
  const auto weights = modality_weights(features, cfg.phi_visual);
  const SemanticGraph sem = build_semantic(features, weights, cfg.k);
  g.semantic_fused = sem.fused;
  std::map<std::string, DenseMatrix> normalized;
  for (const auto& [name, adj] : sem.per_modality) normalized[name] = normalize_sym(adj);
  g.prop_semantic = SparseCsc(fuse_modalities(normalized, weights));
  g.behavioral = build_behavioral(ds, cfg.k, cfg.epsilon);
  g.has_item_graphs = true;
  return g;
}

// ---------------------------------------------------------------------------
// Representation views

// Tape nodes of the propagated views (Eq. 25 wiring):
//   h_u  = bipartite user block,      h_i^ui = bipartite item block,
//   h_hat = h_i^ui + semantic view,   h_final = h_i^ui + diffusion view.
struct ViewNodes {
  Tape::NodeId user_leaf = -1;
  Tape::NodeId item_leaf = -1;
  Tape::NodeId user_rep = -1;
  Tape::NodeId item_ui = -1;
  Tape::NodeId item_semantic = -1;
  Tape::NodeId item_diffusion = -1;
  Tape::NodeId item_hat = -1;
  Tape::NodeId item_final = -1;
};

inline ViewNodes build_views(Tape& tape, const EmbeddingTable& emb, const ModelGraphs& graphs,
                             const RunConfig& cfg, bool trainable) {
  ViewNodes v;
  v.user_leaf = tape.leaf(emb.user, trainable);
  v.item_leaf = tape.leaf(emb.item, trainable);
  const int num_users = emb.user.rows();
  const int num_items = emb.item.rows();

  // Interaction view: mean of propagation layers 0..l_ui.
  Tape::NodeId cur = tape.concat_rows(v.user_leaf, v.item_leaf);
  Tape::NodeId acc = cur;
  for (int l = 0; l < cfg.l_ui; ++l) {
    cur = tape.spmm(&graphs.bipartite, cur);
    acc = tape.add(acc, cur);
  }
  const Tape::NodeId mean = tape.scalar_mul(acc, 1.0 / (cfg.l_ui + 1));
  v.user_rep = tape.slice_rows(mean, 0, num_users);
  v.item_ui = tape.slice_rows(mean, num_users, num_items);

  if (graphs.has_item_graphs) {
    // Item graphs keep only the last propagation layer.
    Tape::NodeId sem = v.item_leaf;
    Tape::NodeId diff = v.item_leaf;
    for (int l = 0; l < cfg.l_ii; ++l) {
      sem = tape.spmm(&graphs.prop_semantic, sem);
      diff = tape.spmm(&graphs.prop_diffusion, diff);
    }
    v.item_semantic = sem;
    v.item_diffusion = diff;
    v.item_hat = tape.add(v.item_ui, sem);
    v.item_final = tape.add(v.item_ui, diff);
  } else {
    v.item_semantic = v.item_ui;
    v.item_diffusion = v.item_ui;
    v.item_hat = v.item_ui;
    v.item_final = v.item_ui;
  }
  return v;
}

// Plain-value views for ranking and checkpoints.
struct Views {
  DenseMatrix user;
  DenseMatrix item_ui;
  DenseMatrix item_hat;
  DenseMatrix item_final;
};

inline Views compute_views(const EmbeddingTable& emb, const ModelGraphs& graphs,
                           const RunConfig& cfg) {
  Tape tape;
  const ViewNodes v = build_views(tape, emb, graphs, cfg, /*trainable=*/false);
  return {tape.value(v.user_rep), tape.value(v.item_ui), tape.value(v.item_hat),
          tape.value(v.item_final)};
}

inline const DenseMatrix& scoring_items(const Views& views, const RunConfig& cfg) {
  return cfg.score_rep == "semantic" ? views.item_hat : views.item_final;
}

// Standalone propagation helpers mirroring the two conventions.
inline DenseMatrix propagate_item_graph(const SparseCsc& adj, const DenseMatrix& item_emb,
                                        int layers) {
  DenseMatrix h = item_emb;
  for (int l = 0; l < layers; ++l) h = adj.multiply(h);
  return h;
}

inline std::pair<DenseMatrix, DenseMatrix> propagate_bipartite(const SparseCsc& adj,
                                                               const DenseMatrix& user_emb,
                                                               const DenseMatrix& item_emb,
                                                               int layers) {
  DenseMatrix cur(user_emb.rows() + item_emb.rows(), user_emb.cols());
  for (int i = 0; i < user_emb.rows(); ++i)
    for (int j = 0; j < user_emb.cols(); ++j) cur(i, j) = user_emb(i, j);
  for (int i = 0; i < item_emb.rows(); ++i)
    for (int j = 0; j < item_emb.cols(); ++j) cur(user_emb.rows() + i, j) = item_emb(i, j);
  DenseMatrix acc = cur;
  for (int l = 0; l < layers; ++l) {
    cur = adj.multiply(cur);
    acc = add(acc, cur);
  }
  const DenseMatrix mean = scale(acc, 1.0 / (layers + 1));
  DenseMatrix hu(user_emb.rows(), user_emb.cols());
  DenseMatrix hi(item_emb.rows(), item_emb.cols());
  for (int i = 0; i < hu.rows(); ++i)
    for (int j = 0; j < hu.cols(); ++j) hu(i, j) = mean(i, j);
  for (int i = 0; i < hi.rows(); ++i)
    for (int j = 0; j < hi.cols(); ++j) hi(i, j) = mean(user_emb.rows() + i, j);
  return {hu, hi};
}

// ---------------------------------------------------------------------------
// Losses

inline Tape::NodeId row_dot(Tape& tape, Tape::NodeId a, Tape::NodeId b) {
  const Tape::NodeId prod = tape.mul(a, b);
  const Tape::NodeId ones = tape.leaf(DenseMatrix(tape.value(a).cols(), 1, 1.0));
  return tape.matmul(prod, ones);
}

// sum over rows of -log sigmoid(<h_u, h_i> - <h_u, h_j>)
inline Tape::NodeId bpr_loss_graph(Tape& tape, Tape::NodeId user_rows, Tape::NodeId pos_rows,
                                   Tape::NodeId neg_rows) {
  const Tape::NodeId gap = tape.sub(row_dot(tape, user_rows, pos_rows),
                                    row_dot(tape, user_rows, neg_rows));
  return tape.scalar_mul(tape.sum_all(tape.log(tape.sigmoid(gap))), -1.0);
}

// InfoNCE over cosine similarities between the two fused item views. The
// denominator runs over every item, the positive pair included.
inline Tape::NodeId contrastive_loss_graph(Tape& tape, Tape::NodeId item_hat,
                                           Tape::NodeId item_final, double tau) {
  const Tape::NodeId a = tape.l2_normalize_rows(item_hat);
  const Tape::NodeId b = tape.l2_normalize_rows(item_final);
  const Tape::NodeId sims = tape.scalar_mul(tape.matmul_nt(a, b), 1.0 / tau);
  const Tape::NodeId lse = tape.sum_all(tape.row_logsumexp(sims));
  const int n = tape.value(sims).rows();
  const Tape::NodeId diag = tape.sum_all(tape.mul(sims, tape.leaf(DenseMatrix::identity(n))));
  return tape.sub(lse, diag);
}

inline double bpr_loss(const DenseMatrix& user_rows, const DenseMatrix& pos_rows,
                       const DenseMatrix& neg_rows) {
  Tape tape;
  return tape.value(bpr_loss_graph(tape, tape.leaf(user_rows), tape.leaf(pos_rows),
                                   tape.leaf(neg_rows)))(0, 0);
}

inline double contrastive_loss(const DenseMatrix& item_hat, const DenseMatrix& item_final,
                               double tau) {
  Tape tape;
  return tape.value(contrastive_loss_graph(tape, tape.leaf(item_hat), tape.leaf(item_final),
                                           tau))(0, 0);
}

inline double joint_loss(double bpr, double cl, double reg, double lambda1, double lambda2) {
  return bpr + lambda1 * cl + lambda2 * reg;
}

struct BatchGraph {
  ViewNodes views;
  Tape::NodeId bpr = -1;
  Tape::NodeId cl = -1;
  Tape::NodeId reg = -1;
  Tape::NodeId joint = -1;
};

// Full joint objective of one BPR batch. L2 covers the ID-embedding rows of
// the users and items the batch touches, each counted once.
inline BatchGraph build_batch_loss(Tape& tape, const EmbeddingTable& emb,
                                   const ModelGraphs& graphs, const RunConfig& cfg,
                                   std::span<const BprTriplet> batch, bool trainable) {
  if (batch.empty()) throw ContractError("batch loss: empty triplet batch");
  BatchGraph g;
  g.views = build_views(tape, emb, graphs, cfg, trainable);

  std::vector<int> users, pos, neg;
  users.reserve(batch.size());
  pos.reserve(batch.size());
  neg.reserve(batch.size());
  std::set<int> uniq_users, uniq_items;
  for (const BprTriplet& t : batch) {
    users.push_back(t.user);
    pos.push_back(t.pos_item);
    neg.push_back(t.neg_item);
    uniq_users.insert(t.user);
    uniq_items.insert(t.pos_item);
    uniq_items.insert(t.neg_item);
  }

  const Tape::NodeId user_rows = tape.gather_rows(g.views.user_rep, users);
  const Tape::NodeId item_scores =
      cfg.score_rep == "semantic" ? g.views.item_hat : g.views.item_final;
  const Tape::NodeId pos_rows = tape.gather_rows(item_scores, pos);
  const Tape::NodeId neg_rows = tape.gather_rows(item_scores, neg);
  g.bpr = bpr_loss_graph(tape, user_rows, pos_rows, neg_rows);

  if (cfg.lambda1 > 0.0 && graphs.has_item_graphs) {
    g.cl = contrastive_loss_graph(tape, g.views.item_hat, g.views.item_final, cfg.tau);
  } else {
    g.cl = tape.leaf(DenseMatrix(1, 1));
  }

  const Tape::NodeId ur =
      tape.gather_rows(g.views.user_leaf, std::vector<int>(uniq_users.begin(), uniq_users.end()));
  const Tape::NodeId ir =
      tape.gather_rows(g.views.item_leaf, std::vector<int>(uniq_items.begin(), uniq_items.end()));
  g.reg = tape.add(tape.sum_all(tape.mul(ur, ur)), tape.sum_all(tape.mul(ir, ir)));

  g.joint = tape.add(tape.add(g.bpr, tape.scalar_mul(g.cl, cfg.lambda1)),
                     tape.scalar_mul(g.reg, cfg.lambda2));
  return g;
}

// ---------------------------------------------------------------------------
// Training

class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after this observation.
  bool observe(int epoch, double value) {
    if (value > best_) {
      best_ = value;
      best_epoch_ = epoch;
      bad_ = 0;
      return false;
    }
    ++bad_;
    return bad_ >= patience_;
  }

  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int bad_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  bool refreshed = false;
  double bgd_loss = 0.0;   // mean over the refresh batches; 0 when not refreshed
  double bpr = 0.0;        // mean per-triplet BPR
  double cl = 0.0;
  double joint = 0.0;
  double val_r20 = 0.0;
};

struct TrainTimings {
  double bgd_seconds = 0.0;
  double total_seconds = 0.0;
};

struct GraphQuality {
  bool available = false;
  double semantic = 0.0;
  double behavioral = 0.0;
  double diffusion = 0.0;  // of the best epoch's graph
};

struct TrainResult {
  EmbeddingTable best_embeddings;
  CdNetParams best_cdnet;
  DenseMatrix best_diffusion_graph;
  int best_epoch = 0;
  double best_val_r20 = 0.0;
  std::vector<EpochRecord> epochs;
  MetricReport test_metrics;
  GraphQuality graph_quality;
  TrainTimings timings;
  long bpr_skipped_users = 0;
};

inline TrainResult train_model(const RunConfig& cfg, const InteractionDataset& ds,
                               const std::vector<ModalityFeatures>& features) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  ModelGraphs graphs = build_model_graphs(cfg, ds, features);
  const DiffusionSchedule schedule(cfg.big_t, cfg.s, cfg.alpha_min, cfg.alpha_max);
  GuidanceConfig guidance{cfg.omega, cfg.p_mu};
  guidance.validate();

  Rng embed_rng = Rng::substream(cfg.seed, "init-embed");
  EmbeddingTable emb = init_embeddings(ds.num_users(), ds.num_items(), cfg.d, embed_rng);
  AdamState emb_opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  Rng cdnet_rng = Rng::substream(cfg.seed, "init-cdnet");
  CdNetParams cdnet = CdNetParams::init(ds.num_items(), cfg.k_d, cfg.use_codec, cdnet_rng);
  AdamState cdnet_opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng bgd_rng = Rng::substream(cfg.seed, "bgd");

  TrainResult result;
  EarlyStopper stopper(cfg.patience);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;

    if (graphs.has_item_graphs && (epoch - 1) % cfg.refresh_interval == 0) {
      const auto t0 = std::chrono::steady_clock::now();
      record.refreshed = true;
      double loss_sum = 0.0;
      long batches = 0;
      std::vector<int> order(ds.num_items());
      for (int i = 0; i < ds.num_items(); ++i) order[i] = i;
      for (int pass = 0; pass < cfg.bgd_passes; ++pass) {
        bgd_rng.shuffle(order);
        for (size_t begin = 0; begin < order.size(); begin += cfg.bgd_batch) {
          const size_t end = std::min(order.size(), begin + cfg.bgd_batch);
          const std::span<const int> items(order.data() + begin, end - begin);
          try {
            loss_sum += bgd_train_step(cdnet, cdnet_opt, graphs.semantic_fused, graphs.behavioral,
                                       items, schedule, guidance, bgd_rng);
          } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ", bgd batch " +
                               std::to_string(batches + 1) + ": " + e.what());
          }
          ++batches;
        }
      }
      record.bgd_loss = batches > 0 ? loss_sum / batches : 0.0;
      const DenseMatrix denoised = reverse_generate_all(cdnet, graphs.semantic_fused,
                                                        graphs.behavioral, schedule, cfg.omega);
      graphs.diffusion = build_diffusion_graph(denoised, cfg.k);
      graphs.prop_diffusion = SparseCsc(normalize_sym(graphs.diffusion));
      result.timings.bgd_seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    long skipped = 0;
    const std::vector<BprTriplet> triplets =
        sample_bpr_triplets(ds, Rng::derive_seed(cfg.seed, "bpr-neg", epoch), &skipped);
    result.bpr_skipped_users = std::max(result.bpr_skipped_users, skipped);
    double bpr_sum = 0.0, cl_sum = 0.0, joint_sum = 0.0;
    long batch_count = 0;
    for (size_t begin = 0; begin < triplets.size(); begin += cfg.bpr_batch) {
      const size_t end = std::min(triplets.size(), begin + cfg.bpr_batch);
      const std::span<const BprTriplet> batch(triplets.data() + begin, end - begin);
      Tape tape;
      const BatchGraph g = build_batch_loss(tape, emb, graphs, cfg, batch, /*trainable=*/true);
      const double joint = tape.value(g.joint)(0, 0);
      if (!std::isfinite(joint)) {
        throw NumericError("epoch " + std::to_string(epoch) + ", bpr batch " +
                           std::to_string(batch_count + 1) + ": non-finite joint loss");
      }
      tape.backward(g.joint);
      try {
        emb_opt.step({&emb.user, &emb.item},
                     {&tape.grad(g.views.user_leaf), &tape.grad(g.views.item_leaf)});
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", bpr batch " +
                           std::to_string(batch_count + 1) + ": " + e.what());
      }
      bpr_sum += tape.value(g.bpr)(0, 0) / batch.size();
      cl_sum += tape.value(g.cl)(0, 0);
      joint_sum += joint;
      ++batch_count;
    }
    if (batch_count > 0) {
      record.bpr = bpr_sum / batch_count;
      record.cl = cl_sum / batch_count;
      record.joint = joint_sum / batch_count;
    }

    const Views views = compute_views(emb, graphs, cfg);
    const RankingResult ranking = rank_all(views.user, scoring_items(views, cfg), ds, 20);
    record.val_r20 = recall_at_k(ranking, ds.user_val_items, 20);
    result.epochs.push_back(record);

    const bool improved = record.val_r20 > stopper.best();
    const bool stop = stopper.observe(epoch, record.val_r20);
    if (improved) {
      result.best_embeddings = emb;
      result.best_cdnet = cdnet;
      result.best_diffusion_graph = graphs.diffusion;
      result.best_epoch = epoch;
      result.best_val_r20 = record.val_r20;
    }
    if (stop) break;
  }

  // Final metrics come from the best state.
  if (graphs.has_item_graphs && result.best_diffusion_graph.rows() > 0) {
    graphs.diffusion = result.best_diffusion_graph;
    graphs.prop_diffusion = SparseCsc(normalize_sym(graphs.diffusion));
  }
  const Views best_views = compute_views(result.best_embeddings, graphs, cfg);
  result.test_metrics =
      compute_metrics(best_views.user, scoring_items(best_views, cfg), ds, ds.user_test_items);

  if (!ds.item_labels.empty() && graphs.has_item_graphs) {
    result.graph_quality.available = true;
    result.graph_quality.semantic =
        graph_edge_precision(graphs.semantic_fused, ds.item_labels).precision;
    result.graph_quality.behavioral =
        graph_edge_precision(graphs.behavioral, ds.item_labels).precision;
    result.graph_quality.diffusion =
        graph_edge_precision(result.best_diffusion_graph, ds.item_labels).precision;
  }

  result.timings.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace igdm
