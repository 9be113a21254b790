#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "igdm/config.hpp"
#include "igdm/model.hpp"
#include "test_util.hpp"

using igdm::DenseMatrix;
using igdm::InteractionDataset;
using igdm::Rng;
using igdm::RunConfig;
using igdm::SparseCsc;

namespace {

DenseMatrix random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseMatrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("identity adjacency leaves item embeddings unchanged") {
  Rng rng(1);
  const DenseMatrix emb = random_matrix(4, 3, rng);
  const SparseCsc identity(DenseMatrix::identity(4));
  const DenseMatrix out = igdm::propagate_item_graph(identity, emb, 1);
  REQUIRE(testutil::max_abs_diff(out, emb) == 0.0);
}

TEST_CASE("one layer over a 2-cycle swaps the embeddings") {
  DenseMatrix swap(2, 2);
  swap(0, 1) = 1.0;
  swap(1, 0) = 1.0;
  DenseMatrix emb(2, 2);
  emb(0, 0) = 1.0;
  emb(0, 1) = 2.0;
  emb(1, 0) = 3.0;
  emb(1, 1) = 4.0;
  const DenseMatrix out = igdm::propagate_item_graph(SparseCsc(swap), emb, 1);
  REQUIRE(out(0, 0) == 3.0);
  REQUIRE(out(0, 1) == 4.0);
  REQUIRE(out(1, 0) == 1.0);
  REQUIRE(out(1, 1) == 2.0);
}

TEST_CASE("zero adjacency yields a zero item view") {
  Rng rng(2);
  const DenseMatrix emb = random_matrix(3, 2, rng);
  const DenseMatrix out = igdm::propagate_item_graph(SparseCsc(DenseMatrix(3, 3)), emb, 1);
  for (double v : out.data()) REQUIRE(v == 0.0);
}

TEST_CASE("zero bipartite adjacency averages the base layer with zeros") {
  Rng rng(3);
  const DenseMatrix ue = random_matrix(2, 3, rng);
  const DenseMatrix ie = random_matrix(3, 3, rng);
  const auto [hu, hi] = igdm::propagate_bipartite(SparseCsc(DenseMatrix(5, 5)), ue, ie, 2);
  REQUIRE(testutil::max_abs_diff(hu, igdm::scale(ue, 1.0 / 3.0)) < 1e-15);
  REQUIRE(testutil::max_abs_diff(hi, igdm::scale(ie, 1.0 / 3.0)) < 1e-15);
}

TEST_CASE("a single user-item pair with unit embeddings keeps value 1") {
  DenseMatrix adj(2, 2);
  adj(0, 1) = 1.0;  // both degrees are 1, so the normalized entries stay 1
  adj(1, 0) = 1.0;
  const DenseMatrix ue(1, 1, 1.0);
  const DenseMatrix ie(1, 1, 1.0);
  const auto [hu, hi] = igdm::propagate_bipartite(SparseCsc(adj), ue, ie, 1);
  REQUIRE(hu(0, 0) == 1.0);
  REQUIRE(hi(0, 0) == 1.0);
}

TEST_CASE("item propagation is equivariant under index permutation") {
  Rng rng(4);
  const int n = 5;
  const DenseMatrix s = random_matrix(n, n, rng, 0.0, 1.0);
  const DenseMatrix h = random_matrix(n, 3, rng);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  DenseMatrix s2(n, n), h2(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) s2(i, j) = s(perm[i], perm[j]);
    for (int j = 0; j < 3; ++j) h2(i, j) = h(perm[i], j);
  }
  const DenseMatrix out = igdm::propagate_item_graph(SparseCsc(s), h, 1);
  const DenseMatrix out2 = igdm::propagate_item_graph(SparseCsc(s2), h2, 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(out2(i, j) == Catch::Approx(out(perm[i], j)).margin(1e-12));
}

TEST_CASE("propagation is linear in the embeddings") {
  Rng rng(5);
  const DenseMatrix s = random_matrix(4, 4, rng, 0.0, 1.0);
  const DenseMatrix h = random_matrix(4, 2, rng);
  const SparseCsc adj(s);
  const DenseMatrix a = igdm::propagate_item_graph(adj, igdm::scale(h, 3.5), 2);
  const DenseMatrix b = igdm::scale(igdm::propagate_item_graph(adj, h, 2), 3.5);
  REQUIRE(testutil::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("contrastive loss on orthonormal identical views matches the closed form") {
  // s(h_i, h_i) = 1 and s(h_i, h_v) = 0: each term is -log(e / (e + n - 1)).
  for (int n : {2, 4, 7}) {
    const DenseMatrix eye = DenseMatrix::identity(n);
    const double loss = igdm::contrastive_loss(eye, eye, 1.0);
    const double term = -std::log(std::exp(1.0) / (std::exp(1.0) + n - 1));
    REQUIRE(loss == Catch::Approx(n * term).margin(1e-12));
    if (n == 2) {
      REQUIRE(term == Catch::Approx(0.31326).margin(5e-6));
    }
  }
}

TEST_CASE("a dominant positive similarity drives the loss to zero as tau shrinks") {
  const DenseMatrix eye = DenseMatrix::identity(3);
  REQUIRE(igdm::contrastive_loss(eye, eye, 0.01) < 1e-8);
}

TEST_CASE("zero-norm rows in the views are guarded, not NaN") {
  DenseMatrix hat(2, 2), fin(2, 2);
  hat(0, 0) = 1.0;  // row 1 of each view is zero
  fin(0, 0) = 1.0;
  const double loss = igdm::contrastive_loss(hat, fin, 0.5);
  REQUIRE(std::isfinite(loss));
}

TEST_CASE("equal scores cost ln 2 per triplet") {
  const DenseMatrix hu(3, 2, 0.5);
  const DenseMatrix hi(3, 2, 0.25);
  const DenseMatrix hj = hi;
  const double loss = igdm::bpr_loss(hu, hi, hj);
  REQUIRE(loss == Catch::Approx(3.0 * std::log(2.0)).margin(1e-12));
  REQUIRE(loss / 3.0 == Catch::Approx(0.693147).margin(5e-7));
}

TEST_CASE("a large positive gap drives the loss to zero") {
  DenseMatrix hu(1, 1, 1.0), hi(1, 1, 20.0), hj(1, 1, 0.0);
  REQUIRE(igdm::bpr_loss(hu, hi, hj) < 1e-8);
}

TEST_CASE("a gap of -20 costs about 20 per triplet") {
  DenseMatrix hu(1, 1, 1.0), hi(1, 1, 0.0), hj(1, 1, 20.0);
  REQUIRE(igdm::bpr_loss(hu, hi, hj) == Catch::Approx(20.0).margin(1e-5));
}

TEST_CASE("bpr depends only on the score difference") {
  DenseMatrix hu(1, 1, 1.0);
  DenseMatrix hi_a(1, 1, 2.0), hj_a(1, 1, 1.0);
  DenseMatrix hi_b(1, 1, 5.0), hj_b(1, 1, 4.0);
  REQUIRE(igdm::bpr_loss(hu, hi_a, hj_a) == igdm::bpr_loss(hu, hi_b, hj_b));
}

TEST_CASE("joint loss weights its terms as configured") {
  REQUIRE(igdm::joint_loss(0.7, 123.0, 456.0, 0.0, 0.0) == 0.7);
  REQUIRE(igdm::joint_loss(1.0, 1.0, 0.0, 0.1, 0.5) == Catch::Approx(1.1).margin(1e-15));
}

namespace {

struct MicroInstance {
  InteractionDataset ds;
  std::vector<igdm::ModalityFeatures> features;
  RunConfig cfg;
  std::vector<igdm::BprTriplet> triplets;
};

MicroInstance micro_instance() {
  MicroInstance inst;
  InteractionDataset& ds = inst.ds;
  for (int u = 0; u < 3; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  for (int i = 0; i < 4; ++i) ds.item_ids.push_back("i" + std::to_string(i));
  ds.user_train_items = {{0, 1}, {1, 2}, {2, 3}};
  ds.user_val_items.resize(3);
  ds.user_test_items.resize(3);
  for (int u = 0; u < 3; ++u)
    for (int i : ds.user_train_items[u]) ds.train.emplace_back(u, i);

  Rng rng(2024);
  for (const char* m : {"visual", "textual"}) {
    igdm::ModalityFeatures f;
    f.modality = m;
    f.values = random_matrix(4, 3, rng, 0.0, 1.0);
    f.missing.assign(4, 0);
    inst.features.push_back(std::move(f));
  }
  inst.cfg.d = 2;
  inst.cfg.k = 2;
  inst.cfg.epsilon = 0.0;
  inst.cfg.lambda1 = 0.3;
  inst.cfg.lambda2 = 0.5;
  inst.cfg.tau = 0.7;
  inst.cfg.k_d = 3;
  inst.triplets = {{0, 0, 2}, {1, 1, 3}, {2, 3, 0}, {0, 1, 3}};
  return inst;
}

}  // namespace

TEST_CASE("the full joint-loss gradient matches finite differences") {
  MicroInstance inst = micro_instance();
  igdm::ModelGraphs graphs = igdm::build_model_graphs(inst.cfg, inst.ds, inst.features);
  // The diffusion graph is normally produced by a BGD refresh; a fixed cycle
  // adjacency is enough to exercise its gradient path.
  DenseMatrix sd(4, 4);
  for (int i = 0; i < 4; ++i) {
    sd(i, i) = 1.0;
    sd((i + 1) % 4, i) = 1.0;
  }
  graphs.diffusion = sd;
  graphs.prop_diffusion = SparseCsc(igdm::normalize_sym(sd));

  Rng rng(88);
  igdm::EmbeddingTable emb = igdm::init_embeddings(3, 4, 2, rng);

  igdm::Tape tape;
  const igdm::BatchGraph g =
      igdm::build_batch_loss(tape, emb, graphs, inst.cfg, inst.triplets, true);
  tape.backward(g.joint);

  const auto loss_fn = [&]() {
    igdm::Tape t2;
    const igdm::BatchGraph g2 =
        igdm::build_batch_loss(t2, emb, graphs, inst.cfg, inst.triplets, false);
    return t2.value(g2.joint)(0, 0);
  };
  const DenseMatrix fd_user = testutil::fd_gradient(loss_fn, emb.user);
  const DenseMatrix fd_item = testutil::fd_gradient(loss_fn, emb.item);
  REQUIRE(testutil::max_rel_err(tape.grad(g.views.user_leaf), fd_user) < 1e-4);
  REQUIRE(testutil::max_rel_err(tape.grad(g.views.item_leaf), fd_item) < 1e-4);
}

TEST_CASE("the gradient splits into bpr + lambda1 cl + lambda2 reg") {
  MicroInstance inst = micro_instance();
  igdm::ModelGraphs graphs = igdm::build_model_graphs(inst.cfg, inst.ds, inst.features);
  DenseMatrix sd = DenseMatrix::identity(4);
  graphs.diffusion = sd;
  graphs.prop_diffusion = SparseCsc(igdm::normalize_sym(sd));
  Rng rng(89);
  igdm::EmbeddingTable emb = igdm::init_embeddings(3, 4, 2, rng);

  igdm::Tape tj;
  const igdm::BatchGraph gj =
      igdm::build_batch_loss(tj, emb, graphs, inst.cfg, inst.triplets, true);
  tj.backward(gj.joint);

  igdm::Tape tb;
  const igdm::BatchGraph gb =
      igdm::build_batch_loss(tb, emb, graphs, inst.cfg, inst.triplets, true);
  tb.backward(gb.bpr);

  igdm::Tape tc;
  const igdm::BatchGraph gc =
      igdm::build_batch_loss(tc, emb, graphs, inst.cfg, inst.triplets, true);
  tc.backward(gc.cl);

  igdm::Tape tr;
  const igdm::BatchGraph gr =
      igdm::build_batch_loss(tr, emb, graphs, inst.cfg, inst.triplets, true);
  tr.backward(gr.reg);

  for (const auto [leaf_j, leaf_b, leaf_c, leaf_r] :
       {std::tuple{gj.views.user_leaf, gb.views.user_leaf, gc.views.user_leaf, gr.views.user_leaf},
        std::tuple{gj.views.item_leaf, gb.views.item_leaf, gc.views.item_leaf,
                   gr.views.item_leaf}}) {
    const DenseMatrix combined =
        igdm::add(tb.grad(leaf_b), igdm::add(igdm::scale(tc.grad(leaf_c), inst.cfg.lambda1),
                                             igdm::scale(tr.grad(leaf_r), inst.cfg.lambda2)));
    REQUIRE(testutil::max_rel_err(tj.grad(leaf_j), combined) < 1e-9);
  }
}

TEST_CASE("fusion identities hold by construction") {
  MicroInstance inst = micro_instance();
  igdm::ModelGraphs graphs = igdm::build_model_graphs(inst.cfg, inst.ds, inst.features);
  DenseMatrix sd(4, 4);
  for (int i = 0; i < 4; ++i) sd(i, (i + 2) % 4) = 1.0;
  graphs.diffusion = sd;
  graphs.prop_diffusion = SparseCsc(igdm::normalize_sym(sd));
  Rng rng(90);
  const igdm::EmbeddingTable emb = igdm::init_embeddings(3, 4, 2, rng);

  igdm::Tape tape;
  const igdm::ViewNodes v = igdm::build_views(tape, emb, graphs, inst.cfg, false);
  const DenseMatrix hat_expected = igdm::add(tape.value(v.item_ui), tape.value(v.item_semantic));
  const DenseMatrix fin_expected = igdm::add(tape.value(v.item_ui), tape.value(v.item_diffusion));
  REQUIRE(std::memcmp(tape.value(v.item_hat).data().data(), hat_expected.data().data(),
                      hat_expected.size() * sizeof(double)) == 0);
  REQUIRE(std::memcmp(tape.value(v.item_final).data().data(), fin_expected.data().data(),
                      fin_expected.size() * sizeof(double)) == 0);

  // hat - final == semantic - diffusion, itemwise.
  const DenseMatrix lhs = igdm::sub(tape.value(v.item_hat), tape.value(v.item_final));
  const DenseMatrix rhs = igdm::sub(tape.value(v.item_semantic), tape.value(v.item_diffusion));
  REQUIRE(testutil::max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("early stopping halts after patience non-improving epochs") {
  igdm::EarlyStopper stopper(20);
  int stopped_at = -1;
  for (int epoch = 1; epoch <= 100; ++epoch) {
    if (stopper.observe(epoch, 0.1)) {
      stopped_at = epoch;
      break;
    }
  }
  REQUIRE(stopped_at == 21);
  REQUIRE(stopper.best_epoch() == 1);
}

TEST_CASE("improvements reset the patience counter") {
  igdm::EarlyStopper stopper(3);
  REQUIRE_FALSE(stopper.observe(1, 0.1));
  REQUIRE_FALSE(stopper.observe(2, 0.1));
  REQUIRE_FALSE(stopper.observe(3, 0.2));  // improvement
  REQUIRE_FALSE(stopper.observe(4, 0.2));
  REQUIRE_FALSE(stopper.observe(5, 0.2));
  REQUIRE(stopper.observe(6, 0.2));
  REQUIRE(stopper.best_epoch() == 3);
}

namespace {

RunConfig small_synth_config() {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.d = 16;
  cfg.k = 5;
  cfg.epsilon = 1.0;
  cfg.k_d = 16;
  cfg.big_t = 5;
  cfg.lambda1 = 0.01;
  cfg.tau = 0.2;
  cfg.omega = 2.0;
  cfg.max_epochs = 4;
  cfg.patience = 4;
  return cfg;
}

}  // namespace

TEST_CASE("training is deterministic for a fixed config and seed") {
  igdm::SynthSpec spec;
  spec.num_users = 40;
  spec.num_items = 20;
  spec.num_clusters = 2;
  spec.feature_dim = 8;
  spec.noise_level = 2.0;
  spec.seed = 13;
  const igdm::SynthData data = igdm::synth_planted(spec);
  const std::vector<igdm::ModalityFeatures> feats = {data.visual, data.textual};

  const RunConfig cfg = small_synth_config();
  const igdm::TrainResult a = igdm::train_model(cfg, data.dataset, feats);
  const igdm::TrainResult b = igdm::train_model(cfg, data.dataset, feats);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t e = 0; e < a.epochs.size(); ++e) {
    REQUIRE(a.epochs[e].bpr == b.epochs[e].bpr);
    REQUIRE(a.epochs[e].cl == b.epochs[e].cl);
    REQUIRE(a.epochs[e].joint == b.epochs[e].joint);
    REQUIRE(a.epochs[e].bgd_loss == b.epochs[e].bgd_loss);
    REQUIRE(a.epochs[e].val_r20 == b.epochs[e].val_r20);
  }
  REQUIRE(a.test_metrics.r20 == b.test_metrics.r20);
  REQUIRE(a.test_metrics.n20 == b.test_metrics.n20);
  REQUIRE(testutil::max_abs_diff(a.best_embeddings.item, b.best_embeddings.item) == 0.0);
}

TEST_CASE("the wo-cl ablation reports a zero contrastive term throughout") {
  igdm::SynthSpec spec;
  spec.num_users = 30;
  spec.num_items = 20;
  spec.num_clusters = 2;
  spec.feature_dim = 8;
  spec.seed = 14;
  const igdm::SynthData data = igdm::synth_planted(spec);

  RunConfig cfg = small_synth_config();
  cfg.max_epochs = 3;
  igdm::apply_ablation(cfg, "wo-cl");
  REQUIRE(cfg.lambda1 == 0.0);
  const igdm::TrainResult r = igdm::train_model(cfg, data.dataset, {data.visual, data.textual});
  for (const auto& e : r.epochs) REQUIRE(e.cl == 0.0);
}

TEST_CASE("the wo-ci ablation pins the guidance configuration") {
  RunConfig cfg;
  igdm::apply_ablation(cfg, "wo-ci");
  REQUIRE(cfg.omega == -1.0);
  REQUIRE(cfg.p_mu == 1.0);
}

TEST_CASE("the wo-ed ablation trains on raw relation vectors at desk scale") {
  igdm::SynthSpec spec;
  spec.num_users = 30;
  spec.num_items = 20;
  spec.num_clusters = 2;
  spec.feature_dim = 8;
  spec.seed = 15;
  const igdm::SynthData data = igdm::synth_planted(spec);

  RunConfig cfg = small_synth_config();
  cfg.max_epochs = 2;
  igdm::apply_ablation(cfg, "wo-ed");
  REQUIRE_FALSE(cfg.use_codec);
  const igdm::TrainResult r = igdm::train_model(cfg, data.dataset, {data.visual, data.textual});
  REQUIRE(r.epochs.size() == 2);
  // Parameter count matches the O(|I|^2) formula.
  const long ni = 20;
  REQUIRE(r.best_cdnet.parameter_count() == ni * (2 * ni + 10) + ni + ni * ni + ni);
}

TEST_CASE("unknown ablation names are config errors") {
  RunConfig cfg;
  REQUIRE_THROWS_AS(igdm::apply_ablation(cfg, "wo-everything"), igdm::ConfigError);
}

TEST_CASE("the no-item-graph baseline trains without features") {
  igdm::SynthSpec spec;
  spec.num_users = 30;
  spec.num_items = 20;
  spec.num_clusters = 2;
  spec.seed = 16;
  const igdm::SynthData data = igdm::synth_planted(spec);

  RunConfig cfg = small_synth_config();
  cfg.max_epochs = 2;
  igdm::apply_variant(cfg, "no-item-graph");
  const igdm::TrainResult r = igdm::train_model(cfg, data.dataset, {});
  REQUIRE(r.epochs.size() == 2);
  for (const auto& e : r.epochs) {
    REQUIRE(e.cl == 0.0);
    REQUIRE_FALSE(e.refreshed);
  }
}

TEST_CASE("igdmrec-star refreshes every fifth epoch") {
  igdm::SynthSpec spec;
  spec.num_users = 30;
  spec.num_items = 20;
  spec.num_clusters = 2;
  spec.feature_dim = 8;
  spec.seed = 17;
  const igdm::SynthData data = igdm::synth_planted(spec);

  RunConfig cfg = small_synth_config();
  cfg.max_epochs = 7;
  cfg.patience = 7;
  igdm::apply_variant(cfg, "igdmrec-star");
  REQUIRE(cfg.refresh_interval == 5);
  const igdm::TrainResult r = igdm::train_model(cfg, data.dataset, {data.visual, data.textual});
  REQUIRE(r.epochs.size() == 7);
  for (const auto& e : r.epochs) {
    REQUIRE(e.refreshed == (e.epoch == 1 || e.epoch == 6));
  }
}

TEST_CASE("on planted data the full model beats the no-item-graph baseline") {
  igdm::SynthSpec spec;
  spec.num_users = 200;
  spec.num_items = 100;
  spec.num_clusters = 2;
  spec.feature_dim = 16;
  spec.noise_level = 3.0;
  spec.seed = 7;
  const igdm::SynthData data = igdm::synth_planted(spec);
  const std::vector<igdm::ModalityFeatures> feats = {data.visual, data.textual};

  RunConfig cfg;
  cfg.seed = 7;
  cfg.d = 32;
  cfg.k = 10;
  cfg.epsilon = 2.0;
  cfg.k_d = 32;
  cfg.big_t = 5;
  cfg.lambda1 = 0.01;
  cfg.tau = 0.2;
  cfg.omega = 2.0;
  cfg.max_epochs = 30;
  cfg.patience = 10;
  const igdm::TrainResult full = igdm::train_model(cfg, data.dataset, feats);

  RunConfig base = cfg;
  igdm::apply_variant(base, "no-item-graph");
  const igdm::TrainResult baseline = igdm::train_model(base, data.dataset, feats);

  INFO("full " << full.test_metrics.r20 << " baseline " << baseline.test_metrics.r20);
  REQUIRE(full.test_metrics.r20 > baseline.test_metrics.r20);
}
