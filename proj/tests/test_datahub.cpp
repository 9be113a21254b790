#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>

#include "igdm/dataset.hpp"
#include "igdm/eval.hpp"
#include "igdm/graphs.hpp"
#include "test_util.hpp"

using igdm::DenseMatrix;
using igdm::InteractionDataset;
using testutil::TempDir;

namespace {

std::string ten_by_ten() {
  std::string text;
  for (int u = 0; u < 10; ++u) {
    for (int i = 0; i < 10; ++i) {
      text += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\n";
    }
  }
  return text;
}

}  // namespace

TEST_CASE("ten users with ten pairs split 8:1:1 per user") {
  TempDir dir("split");
  testutil::write_text(dir.file("x.tsv"), ten_by_ten());
  const InteractionDataset ds = igdm::load_interactions(dir.file("x.tsv"), 42);
  REQUIRE(ds.num_users() == 10);
  REQUIRE(ds.num_items() == 10);
  for (int u = 0; u < 10; ++u) {
    REQUIRE(ds.user_train_items[u].size() == 8);
    REQUIRE(ds.user_val_items[u].size() == 1);
    REQUIRE(ds.user_test_items[u].size() == 1);
  }
}

TEST_CASE("splits are disjoint and cover all kept pairs") {
  TempDir dir("disjoint");
  testutil::write_text(dir.file("x.tsv"), ten_by_ten());
  const InteractionDataset ds = igdm::load_interactions(dir.file("x.tsv"), 3);
  std::set<std::pair<int, int>> all;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& p : *split) REQUIRE(all.insert(p).second);  // disjoint
  }
  REQUIRE(all.size() == 100);
}

TEST_CASE("duplicate pairs are deduplicated and counted") {
  TempDir dir("dups");
  std::string text = ten_by_ten();
  text += "u0\ti0\nu0\ti1\n";
  testutil::write_text(dir.file("x.tsv"), text);
  igdm::LoadStats stats;
  const InteractionDataset ds = igdm::load_interactions(dir.file("x.tsv"), 42, 5, &stats);
  REQUIRE(stats.duplicate_pairs == 2);
  REQUIRE(ds.train.size() + ds.val.size() + ds.test.size() == 100);
}

TEST_CASE("malformed line reports its line number") {
  TempDir dir("badline");
  testutil::write_text(dir.file("x.tsv"), "u1\ti1\nu2 i2\nu3\ti3\n");
  try {
    igdm::load_interactions(dir.file("x.tsv"), 1);
    FAIL("expected InputError");
  } catch (const igdm::InputError& e) {
    REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("empty interactions file is a hard error") {
  TempDir dir("empty");
  testutil::write_text(dir.file("x.tsv"), "");
  REQUIRE_THROWS_AS(igdm::load_interactions(dir.file("x.tsv"), 1), igdm::InputError);
}

TEST_CASE("users with fewer than 3 pairs are dropped and counted") {
  TempDir dir("drop");
  std::string text;
  for (int i = 0; i < 5; ++i) text += "big\tk" + std::to_string(i) + "\n";
  text += "tiny\tk0\ntiny\tk1\n";
  testutil::write_text(dir.file("x.tsv"), text);
  igdm::LoadStats stats;
  const InteractionDataset ds = igdm::load_interactions(dir.file("x.tsv"), 9, 1, &stats);
  REQUIRE(stats.dropped_users == 1);
  REQUIRE(ds.num_users() == 1);
  REQUIRE(ds.user_ids[0] == "big");
}

TEST_CASE("core filtering removes sparse users and items to a fixed point") {
  TempDir dir("core");
  // u0..u4 x i0..i4 is a stable 5-core block; i5 is touched only by u5.
  std::string text;
  for (int u = 0; u < 5; ++u)
    for (int i = 0; i < 5; ++i)
      text += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\n";
  text += "u5\ti5\nu5\ti0\nu5\ti1\nu5\ti2\nu5\ti3\n";
  testutil::write_text(dir.file("x.tsv"), text);
  igdm::LoadStats stats;
  const InteractionDataset ds = igdm::load_interactions(dir.file("x.tsv"), 1, 5, &stats);
  // i5 has one user, so it goes; u5 is left with 4 < 5 pairs and follows.
  REQUIRE(stats.core_removed_items == 1);
  REQUIRE(stats.core_removed_users == 1);
  REQUIRE(ds.num_users() == 5);
  REQUIRE(ds.num_items() == 5);
}

TEST_CASE("loader is deterministic for a fixed seed") {
  TempDir dir("determ");
  testutil::write_text(dir.file("x.tsv"), ten_by_ten());
  const InteractionDataset a = igdm::load_interactions(dir.file("x.tsv"), 77);
  const InteractionDataset b = igdm::load_interactions(dir.file("x.tsv"), 77);
  const InteractionDataset c = igdm::load_interactions(dir.file("x.tsv"), 78);
  REQUIRE(a.hash() == b.hash());
  REQUIRE(a.hash() != c.hash());
}

TEST_CASE("feature file of 3 items x dim 2 loads as a 3x2 matrix") {
  TempDir dir("feat");
  igdm::FeatureManifest mf;
  mf.num_items = 3;
  mf.dim = 2;
  mf.modality = "visual";
  mf.item_ids = {"a", "b", "c"};
  igdm::write_feature_manifest(dir.file("v.manifest"), mf);
  DenseMatrix values(3, 2);
  for (size_t i = 0; i < values.size(); ++i) values.data()[i] = static_cast<double>(i) + 1.0;
  igdm::write_features_f32(dir.file("v.f32"), values);

  InteractionDataset ds;
  ds.item_ids = {"a", "b", "c"};
  const igdm::ModalityFeatures f = igdm::load_features(dir.file("v.f32"), dir.file("v.manifest"), ds);
  REQUIRE(f.values.rows() == 3);
  REQUIRE(f.values.cols() == 2);
  REQUIRE(f.values(0, 0) == 1.0);
  REQUIRE(f.values(2, 1) == 6.0);
  REQUIRE(f.modality == "visual");
}

TEST_CASE("permuted manifest order is realigned to dataset indexing") {
  TempDir dir("perm");
  igdm::FeatureManifest mf;
  mf.num_items = 3;
  mf.dim = 2;
  mf.modality = "textual";
  mf.item_ids = {"c", "a", "b"};  // file rows: c, a, b
  igdm::write_feature_manifest(dir.file("t.manifest"), mf);
  DenseMatrix values(3, 2);
  const double rows[3][2] = {{5, 6}, {1, 2}, {3, 4}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) values(i, j) = rows[i][j];
  igdm::write_features_f32(dir.file("t.f32"), values);

  InteractionDataset ds;
  ds.item_ids = {"a", "b", "c"};
  const igdm::ModalityFeatures f = igdm::load_features(dir.file("t.f32"), dir.file("t.manifest"), ds);
  REQUIRE(f.values(0, 0) == 1.0);  // a
  REQUIRE(f.values(1, 0) == 3.0);  // b
  REQUIRE(f.values(2, 0) == 5.0);  // c
}

TEST_CASE("truncated feature file reports expected and actual byte counts") {
  TempDir dir("trunc");
  igdm::FeatureManifest mf;
  mf.num_items = 3;
  mf.dim = 2;
  mf.modality = "visual";
  mf.item_ids = {"a", "b", "c"};
  igdm::write_feature_manifest(dir.file("v.manifest"), mf);
  testutil::write_text(dir.file("v.f32"), std::string(20, '\0'));

  InteractionDataset ds;
  ds.item_ids = {"a", "b", "c"};
  try {
    igdm::load_features(dir.file("v.f32"), dir.file("v.manifest"), ds);
    FAIL("expected InputError");
  } catch (const igdm::InputError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("24") != std::string::npos);
    REQUIRE(msg.find("20") != std::string::npos);
  }
}

TEST_CASE("dataset items missing from the manifest are a hard error") {
  TempDir dir("mismatch");
  igdm::FeatureManifest mf;
  mf.num_items = 1;
  mf.dim = 2;
  mf.modality = "visual";
  mf.item_ids = {"a"};
  igdm::write_feature_manifest(dir.file("v.manifest"), mf);
  igdm::write_features_f32(dir.file("v.f32"), DenseMatrix(1, 2, 1.0));

  InteractionDataset ds;
  ds.item_ids = {"a", "b"};
  try {
    igdm::load_features(dir.file("v.f32"), dir.file("v.manifest"), ds);
    FAIL("expected InputError");
  } catch (const igdm::InputError& e) {
    REQUIRE(std::string(e.what()).find("b") != std::string::npos);
  }
}

namespace {

InteractionDataset tiny_dataset(int num_users, int num_items,
                                const std::vector<std::vector<int>>& train) {
  InteractionDataset ds;
  for (int u = 0; u < num_users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  for (int i = 0; i < num_items; ++i) ds.item_ids.push_back("i" + std::to_string(i));
  ds.user_train_items = train;
  ds.user_val_items.resize(num_users);
  ds.user_test_items.resize(num_users);
  for (int u = 0; u < num_users; ++u) {
    std::sort(ds.user_train_items[u].begin(), ds.user_train_items[u].end());
    for (int i : ds.user_train_items[u]) ds.train.emplace_back(u, i);
  }
  return ds;
}

}  // namespace

TEST_CASE("with two items the negative is forced") {
  const InteractionDataset ds = tiny_dataset(1, 2, {{0}});
  const auto triplets = igdm::sample_bpr_triplets(ds, 5);
  REQUIRE(triplets.size() == 1);
  REQUIRE(triplets[0].user == 0);
  REQUIRE(triplets[0].pos_item == 0);
  REQUIRE(triplets[0].neg_item == 1);
}

TEST_CASE("negatives never fall in the user's train set") {
  const InteractionDataset ds = tiny_dataset(4, 20, {{0, 1, 2, 3, 4},
                                                     {5, 6, 7},
                                                     {8, 9, 10, 11},
                                                     {0, 5, 8, 12, 19}});
  long draws = 0;
  for (uint64_t epoch = 0; draws < 10000; ++epoch) {
    for (const auto& t : igdm::sample_bpr_triplets(ds, epoch)) {
      ++draws;
      REQUIRE_FALSE(ds.user_has_train_item(t.user, t.neg_item));
    }
  }
}

TEST_CASE("the triplet stream is deterministic per epoch seed") {
  const InteractionDataset ds = tiny_dataset(3, 10, {{0, 1}, {2, 3}, {4, 5}});
  const auto a = igdm::sample_bpr_triplets(ds, 123);
  const auto b = igdm::sample_bpr_triplets(ds, 123);
  const auto c = igdm::sample_bpr_triplets(ds, 124);
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].user == b[i].user && a[i].pos_item == b[i].pos_item &&
           a[i].neg_item == b[i].neg_item;
  }
  REQUIRE(same);
  bool all_equal = a.size() == c.size();
  if (all_equal) {
    for (size_t i = 0; i < a.size(); ++i) {
      all_equal = all_equal && a[i].user == c[i].user && a[i].pos_item == c[i].pos_item &&
                  a[i].neg_item == c[i].neg_item;
    }
  }
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("a user whose train set covers all items is skipped") {
  const InteractionDataset ds = tiny_dataset(2, 3, {{0, 1, 2}, {0}});
  long skipped = 0;
  const auto triplets = igdm::sample_bpr_triplets(ds, 1, &skipped);
  REQUIRE(skipped == 1);
  REQUIRE(triplets.size() == 1);
  REQUIRE(triplets[0].user == 1);
}

TEST_CASE("zero-variance noise leaves features untouched") {
  igdm::ModalityFeatures f;
  f.modality = "visual";
  f.values = DenseMatrix(4, 3, 2.5);
  f.missing.assign(4, 0);
  igdm::CorruptionSpec spec;
  spec.mode = igdm::CorruptionSpec::Mode::kGaussianNoise;
  spec.noise_variance = 0.0;
  const auto out = igdm::corrupt(f, spec);
  REQUIRE(testutil::max_abs_diff(out.values, f.values) == 0.0);
}

TEST_CASE("missing rate one masks every row") {
  igdm::ModalityFeatures f;
  f.modality = "textual";
  f.values = DenseMatrix(5, 2, 1.0);
  f.missing.assign(5, 0);
  igdm::CorruptionSpec spec;
  spec.mode = igdm::CorruptionSpec::Mode::kModalityMask;
  spec.missing_rate = 1.0;
  spec.seed = 3;
  const auto out = igdm::corrupt(f, spec);
  for (double v : out.values.data()) REQUIRE(v == 0.0);
  for (uint8_t m : out.missing) REQUIRE(m == 1);
}

TEST_CASE("gaussian corruption has the configured variance") {
  igdm::ModalityFeatures f;
  f.modality = "visual";
  f.values = DenseMatrix(1000, 1000, 0.0);
  f.missing.assign(1000, 0);
  igdm::CorruptionSpec spec;
  spec.mode = igdm::CorruptionSpec::Mode::kGaussianNoise;
  spec.noise_variance = 1e-4;
  spec.seed = 11;
  const auto out = igdm::corrupt(f, spec);
  double mean = 0.0;
  for (double v : out.values.data()) mean += v;
  mean /= static_cast<double>(out.values.size());
  double var = 0.0;
  for (double v : out.values.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.values.size() - 1);
  REQUIRE(var == Catch::Approx(1e-4).epsilon(0.05));
}

TEST_CASE("corrupt is a pure function of features and spec") {
  igdm::ModalityFeatures f;
  f.modality = "visual";
  f.values = DenseMatrix(10, 4, 1.0);
  f.missing.assign(10, 0);
  igdm::CorruptionSpec spec;
  spec.mode = igdm::CorruptionSpec::Mode::kGaussianNoise;
  spec.noise_variance = 0.5;
  spec.seed = 99;
  const auto a = igdm::corrupt(f, spec);
  const auto b = igdm::corrupt(f, spec);
  REQUIRE(testutil::max_abs_diff(a.values, b.values) == 0.0);
}

TEST_CASE("out-of-range missing rate is a config error") {
  igdm::ModalityFeatures f;
  f.values = DenseMatrix(2, 2, 1.0);
  f.missing.assign(2, 0);
  igdm::CorruptionSpec spec;
  spec.mode = igdm::CorruptionSpec::Mode::kModalityMask;
  spec.missing_rate = 1.5;
  REQUIRE_THROWS_AS(igdm::corrupt(f, spec), igdm::ConfigError);
}

TEST_CASE("noise-free synthetic clusters have within-cluster cosine exactly 1") {
  igdm::SynthSpec spec;
  spec.num_users = 20;
  spec.num_items = 10;
  spec.num_clusters = 2;
  spec.feature_dim = 4;
  spec.noise_level = 0.0;
  spec.seed = 5;
  const auto data = igdm::synth_planted(spec);
  const DenseMatrix sims = igdm::cosine_similarity_matrix(data.visual.values);
  for (int i = 0; i < data.dataset.num_items(); ++i) {
    for (int j = 0; j < data.dataset.num_items(); ++j) {
      if (data.dataset.item_labels[i] == data.dataset.item_labels[j]) {
        REQUIRE(sims(i, j) == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }
}

TEST_CASE("synthetic labels partition the items") {
  igdm::SynthSpec spec;
  spec.num_users = 50;
  spec.num_items = 30;
  spec.num_clusters = 3;
  spec.seed = 9;
  const auto data = igdm::synth_planted(spec);
  REQUIRE(static_cast<int>(data.dataset.item_labels.size()) == data.dataset.num_items());
  for (int label : data.dataset.item_labels) {
    REQUIRE(label >= 0);
    REQUIRE(label < 3);
  }
}

TEST_CASE("with noisy features the behavioral graph beats the semantic graph") {
  igdm::SynthSpec spec;
  spec.num_users = 200;
  spec.num_items = 100;
  spec.num_clusters = 2;
  spec.feature_dim = 16;
  spec.noise_level = 3.0;
  spec.seed = 7;
  const auto data = igdm::synth_planted(spec);

  const DenseMatrix semantic =
      igdm::knn_columns(igdm::cosine_similarity_matrix(data.visual.values), 10);
  const DenseMatrix behavioral = igdm::build_behavioral(data.dataset, 10, 2.0);
  const auto sem = igdm::graph_edge_precision(semantic, data.dataset.item_labels);
  const auto beh = igdm::graph_edge_precision(behavioral, data.dataset.item_labels);
  REQUIRE(beh.precision > sem.precision);
}

TEST_CASE("indivisible cluster count is rejected") {
  igdm::SynthSpec spec;
  spec.num_items = 10;
  spec.num_clusters = 3;
  REQUIRE_THROWS_AS(igdm::synth_planted(spec), igdm::ConfigError);
}
