#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"

namespace igdm {

// Users, items, and the per-user train/val/test split of positive pairs.
// The interaction matrix A is defined by the train pairs only.
struct InteractionDataset {
  std::vector<std::string> user_ids;  // dense index -> external id
  std::vector<std::string> item_ids;
  std::vector<std::pair<int, int>> train;  // (user, item)
  std::vector<std::pair<int, int>> val;
  std::vector<std::pair<int, int>> test;
  std::vector<std::vector<int>> user_train_items;  // sorted per user
  std::vector<std::vector<int>> user_val_items;
  std::vector<std::vector<int>> user_test_items;
  std::vector<int> item_labels;  // planted cluster per item; empty when unknown

  int num_users() const { return static_cast<int>(user_ids.size()); }
  int num_items() const { return static_cast<int>(item_ids.size()); }

  bool user_has_train_item(int u, int i) const {
    const auto& v = user_train_items[u];
    return std::binary_search(v.begin(), v.end(), i);
  }

  // Order-insensitive only in the sense that the canonical form is fixed:
  // ids, then split pair lists in stored order.
  uint64_t hash() const {
    uint64_t h = 14695981039346656037ull;
    const auto mix = [&h](uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    const auto mix_str = [&](const std::string& s) {
      mix(s.size());
      for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
      }
    };
    mix(user_ids.size());
    mix(item_ids.size());
    for (const auto& s : user_ids) mix_str(s);
    for (const auto& s : item_ids) mix_str(s);
    for (const auto* split : {&train, &val, &test}) {
      mix(split->size());
      for (const auto& [u, i] : *split) {
        mix(static_cast<uint64_t>(u));
        mix(static_cast<uint64_t>(i));
      }
    }
    for (int label : item_labels) mix(static_cast<uint64_t>(label));
    return h;
  }
};

struct ModalityFeatures {
  std::string modality;  // "visual" or "textual"
  DenseMatrix values;    // |I| x dim, row i aligned with item index i
  std::vector<uint8_t> missing;  // flagged zero rows

  int dim() const { return values.cols(); }
};

struct LoadStats {
  long parsed_pairs = 0;
  long duplicate_pairs = 0;
  long dropped_users = 0;   // below the minimum of 3 after core filtering
  long core_removed_users = 0;
  long core_removed_items = 0;
};

namespace detail {

// Per-user 8:1:1 split. Validation and test get floor(n/10) but never less
// than one pair each; every user keeps at least one train positive.
inline void split_user(int user, const std::vector<int>& items, uint64_t seed,
                       InteractionDataset& ds) {
  std::vector<int> order = items;
  std::sort(order.begin(), order.end());
  Rng rng(Rng::derive_seed(seed, "split", static_cast<uint64_t>(user)));
  rng.shuffle(order);
  const int n = static_cast<int>(order.size());
  const int n_test = std::max(1, n / 10);
  const int n_val = std::max(1, n / 10);
  const int n_train = n - n_val - n_test;
  for (int k = 0; k < n; ++k) {
    const int item = order[k];
    if (k < n_train) {
      ds.train.emplace_back(user, item);
      ds.user_train_items[user].push_back(item);
    } else if (k < n_train + n_val) {
      ds.val.emplace_back(user, item);
      ds.user_val_items[user].push_back(item);
    } else {
      ds.test.emplace_back(user, item);
      ds.user_test_items[user].push_back(item);
    }
  }
  std::sort(ds.user_train_items[user].begin(), ds.user_train_items[user].end());
  std::sort(ds.user_val_items[user].begin(), ds.user_val_items[user].end());
  std::sort(ds.user_test_items[user].begin(), ds.user_test_items[user].end());
}

inline InteractionDataset build_from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs, uint64_t seed) {
  // Canonical dense indexing: ids sorted lexicographically.
  std::set<std::string> users, items;
  for (const auto& [u, i] : pairs) {
    users.insert(u);
    items.insert(i);
  }
  InteractionDataset ds;
  ds.user_ids.assign(users.begin(), users.end());
  ds.item_ids.assign(items.begin(), items.end());
  std::map<std::string, int> uidx, iidx;
  for (int k = 0; k < ds.num_users(); ++k) uidx[ds.user_ids[k]] = k;
  for (int k = 0; k < ds.num_items(); ++k) iidx[ds.item_ids[k]] = k;

  std::vector<std::vector<int>> per_user(ds.num_users());
  for (const auto& [u, i] : pairs) per_user[uidx[u]].push_back(iidx[i]);

  ds.user_train_items.resize(ds.num_users());
  ds.user_val_items.resize(ds.num_users());
  ds.user_test_items.resize(ds.num_users());
  for (int u = 0; u < ds.num_users(); ++u) split_user(u, per_user[u], seed, ds);
  return ds;
}

}  // namespace detail

// Reads `user<TAB>item` lines, applies iterative core filtering (users and
// items below `core_level` removed until a fixed point), drops users left
// with fewer than 3 pairs, then splits 8:1:1 per user.
inline InteractionDataset load_interactions(const std::string& path, uint64_t seed,
                                            int core_level = 5, LoadStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open interactions file: " + path);

  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::pair<std::string, std::string>> pairs;
  LoadStats local;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": expected `user<TAB>item`, got: " + line);
    }
    ++local.parsed_pairs;
    auto pair = std::make_pair(line.substr(0, tab), line.substr(tab + 1));
    if (!seen.insert(pair).second) {
      ++local.duplicate_pairs;
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw InputError("interactions file is empty: " + path);

  // Iterative core filter on the deduplicated pairs.
  if (core_level > 1) {
    bool changed = true;
    while (changed) {
      changed = false;
      std::map<std::string, int> ucount, icount;
      for (const auto& [u, i] : pairs) {
        ++ucount[u];
        ++icount[i];
      }
      std::vector<std::pair<std::string, std::string>> kept;
      std::set<std::string> bad_users, bad_items;
      for (const auto& [u, c] : ucount)
        if (c < core_level) bad_users.insert(u);
      for (const auto& [i, c] : icount)
        if (c < core_level) bad_items.insert(i);
      if (!bad_users.empty() || !bad_items.empty()) {
        changed = true;
        local.core_removed_users += static_cast<long>(bad_users.size());
        local.core_removed_items += static_cast<long>(bad_items.size());
        for (const auto& p : pairs) {
          if (bad_users.count(p.first) == 0 && bad_items.count(p.second) == 0) kept.push_back(p);
        }
        pairs.swap(kept);
      }
    }
  }

  // A user needs at least 3 pairs to populate all three splits.
  {
    std::map<std::string, int> ucount;
    for (const auto& [u, i] : pairs) ++ucount[u];
    std::vector<std::pair<std::string, std::string>> kept;
    std::set<std::string> dropped;
    for (const auto& p : pairs) {
      if (ucount[p.first] < 3) {
        dropped.insert(p.first);
      } else {
        kept.push_back(p);
      }
    }
    local.dropped_users = static_cast<long>(dropped.size());
    pairs.swap(kept);
  }
  if (pairs.empty()) {
    throw InputError("no interactions survive filtering in " + path);
  }
  if (stats != nullptr) *stats = local;
  return detail::build_from_pairs(pairs, seed);
}

// ---------------------------------------------------------------------------
// Modality features: raw little-endian float32 rows plus a text manifest.

struct FeatureManifest {
  int num_items = 0;
  int dim = 0;
  std::string modality;
  std::vector<std::string> item_ids;  // file row order
};

inline FeatureManifest read_feature_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open feature manifest: " + path);
  FeatureManifest mf;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected `key<TAB>value`");
    }
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (key == "num_items") {
      mf.num_items = std::stoi(value);
    } else if (key == "dim") {
      mf.dim = std::stoi(value);
    } else if (key == "modality") {
      mf.modality = value;
    } else if (key == "item") {
      mf.item_ids.push_back(value);
    } else {
      throw InputError(path + ":" + std::to_string(line_no) + ": unknown key `" + key + "`");
    }
  }
  if (mf.num_items != static_cast<int>(mf.item_ids.size())) {
    throw InputError(path + ": num_items=" + std::to_string(mf.num_items) + " but " +
                     std::to_string(mf.item_ids.size()) + " item lines");
  }
  if (mf.dim <= 0) throw InputError(path + ": dim must be positive");
  return mf;
}

inline void write_feature_manifest(const std::string& path, const FeatureManifest& mf) {
  std::ofstream out(path, std::ios::binary);
  out << "num_items\t" << mf.num_items << "\n";
  out << "dim\t" << mf.dim << "\n";
  out << "modality\t" << mf.modality << "\n";
  for (const auto& id : mf.item_ids) out << "item\t" << id << "\n";
}

// Loads features and permutes rows so that row i corresponds to dataset item
// index i. Items missing from the manifest are a hard error; extra manifest
// rows (e.g. items removed by core filtering) are ignored.
inline ModalityFeatures load_features(const std::string& f32_path, const std::string& manifest_path,
                                      const InteractionDataset& ds) {
  const FeatureManifest mf = read_feature_manifest(manifest_path);
  std::ifstream in(f32_path, std::ios::binary);
  if (!in) throw InputError("cannot open feature file: " + f32_path);
  in.seekg(0, std::ios::end);
  const long long actual = static_cast<long long>(in.tellg());
  const long long expected = 4ll * mf.num_items * mf.dim;
  if (actual != expected) {
    throw InputError(f32_path + ": expected " + std::to_string(expected) + " bytes (" +
                     std::to_string(mf.num_items) + "x" + std::to_string(mf.dim) +
                     " float32), found " + std::to_string(actual));
  }
  in.seekg(0, std::ios::beg);
  std::vector<float> raw(static_cast<size_t>(mf.num_items) * mf.dim);
  in.read(reinterpret_cast<char*>(raw.data()), expected);
  if (!in) throw InputError(f32_path + ": short read");

  std::map<std::string, int> file_row;
  for (int r = 0; r < mf.num_items; ++r) file_row[mf.item_ids[r]] = r;

  std::vector<std::string> missing_ids;
  ModalityFeatures out;
  out.modality = mf.modality;
  out.values = DenseMatrix(ds.num_items(), mf.dim);
  out.missing.assign(ds.num_items(), 0);
  for (int i = 0; i < ds.num_items(); ++i) {
    const auto it = file_row.find(ds.item_ids[i]);
    if (it == file_row.end()) {
      missing_ids.push_back(ds.item_ids[i]);
      continue;
    }
    const float* src = raw.data() + static_cast<size_t>(it->second) * mf.dim;
    bool all_zero = true;
    for (int j = 0; j < mf.dim; ++j) {
      out.values(i, j) = static_cast<double>(src[j]);
      if (src[j] != 0.0f) all_zero = false;
    }
    if (all_zero) out.missing[i] = 1;
  }
  if (!missing_ids.empty()) {
    std::string msg = manifest_path + ": missing features for " +
                      std::to_string(missing_ids.size()) + " dataset items:";
    for (size_t k = 0; k < missing_ids.size() && k < 16; ++k) msg += " " + missing_ids[k];
    if (missing_ids.size() > 16) msg += " ...";
    throw InputError(msg);
  }
  out.values.require_finite("features " + f32_path);
  return out;
}

inline void write_features_f32(const std::string& path, const DenseMatrix& values) {
  std::ofstream out(path, std::ios::binary);
  for (int i = 0; i < values.rows(); ++i) {
    for (int j = 0; j < values.cols(); ++j) {
      const float f = static_cast<float>(values(i, j));
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
}

// ---------------------------------------------------------------------------
// BPR triplets

struct BprTriplet {
  int user;
  int pos_item;
  int neg_item;
};

// One triplet per train positive. Negatives are uniform over the items the
// user has not interacted with in the train split; order is shuffled per
// epoch. Users whose train set covers every item are skipped.
inline std::vector<BprTriplet> sample_bpr_triplets(const InteractionDataset& ds,
                                                   uint64_t epoch_seed,
                                                   long* skipped_users = nullptr) {
  Rng rng(epoch_seed);
  std::vector<std::pair<int, int>> order = ds.train;
  rng.shuffle(order);
  std::vector<BprTriplet> out;
  out.reserve(order.size());
  std::set<int> skipped;
  const int num_items = ds.num_items();
  for (const auto& [u, i] : order) {
    if (static_cast<int>(ds.user_train_items[u].size()) >= num_items) {
      skipped.insert(u);
      continue;
    }
    int j;
    do {
      j = static_cast<int>(rng.uniform_index(static_cast<size_t>(num_items)));
    } while (ds.user_has_train_item(u, j));
    out.push_back({u, i, j});
  }
  if (skipped_users != nullptr) *skipped_users = static_cast<long>(skipped.size());
  return out;
}

// ---------------------------------------------------------------------------
// Robustness corruptions

struct CorruptionSpec {
  enum class Mode { kGaussianNoise, kModalityMask };
  Mode mode = Mode::kGaussianNoise;
  double noise_variance = 0.0;
  double missing_rate = 0.0;
  uint64_t seed = 0;
};

// Pure in (features, spec): the seed lives in the spec.
inline ModalityFeatures corrupt(const ModalityFeatures& features, const CorruptionSpec& spec) {
  ModalityFeatures out = features;
  if (spec.mode == CorruptionSpec::Mode::kGaussianNoise) {
    if (spec.noise_variance < 0.0) throw ConfigError("noise_variance must be nonnegative");
    if (spec.noise_variance == 0.0) return out;
    Rng rng(Rng::derive_seed(spec.seed, "corrupt-noise-" + features.modality));
    const double sigma = std::sqrt(spec.noise_variance);
    for (double& v : out.values.data()) v += sigma * rng.normal();
    return out;
  }
  if (spec.missing_rate < 0.0 || spec.missing_rate > 1.0) {
    throw ConfigError("missing_rate must lie in [0,1], got " + std::to_string(spec.missing_rate));
  }
  const int num_items = features.values.rows();
  const int n_mask = static_cast<int>(spec.missing_rate * num_items);
  Rng rng(Rng::derive_seed(spec.seed, "corrupt-mask-" + features.modality));
  std::vector<int> idx(num_items);
  for (int i = 0; i < num_items; ++i) idx[i] = i;
  rng.shuffle(idx);
  for (int k = 0; k < n_mask; ++k) {
    const int row = idx[k];
    for (int j = 0; j < out.values.cols(); ++j) out.values(row, j) = 0.0;
    out.missing[row] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planted-structure synthetic data

struct SynthSpec {
  int num_users = 200;
  int num_items = 100;
  int num_clusters = 2;
  int feature_dim = 16;
  double noise_level = 1.0;
  double noise_level_visual = -1.0;  // < 0: use noise_level for both modalities
  uint64_t seed = 7;
  int per_user = 10;          // positives drawn per user
  double within_prob = 0.9;   // share of within-cluster positives
  double popularity_exponent = 0.0;  // Zipf skew of item popularity; 0 = uniform

  double visual_noise() const { return noise_level_visual < 0.0 ? noise_level : noise_level_visual; }
};

struct SynthData {
  InteractionDataset dataset;
  ModalityFeatures visual;
  ModalityFeatures textual;
  std::vector<int> item_labels;
};

// Users and items both carry a planted cluster; interactions fall mostly
// within the user's cluster while features are cluster centroids plus
// isotropic noise. High feature noise with clean interactions makes the
// behavioral signal strictly more informative than the semantic one.
inline SynthData synth_planted(const SynthSpec& spec) {
  if (spec.num_clusters < 1 || spec.num_items % spec.num_clusters != 0) {
    throw ConfigError("synth: num_items (" + std::to_string(spec.num_items) +
                      ") must be divisible by num_clusters (" +
                      std::to_string(spec.num_clusters) + ")");
  }
  if (spec.num_users < 1 || spec.feature_dim < 1 || spec.per_user < 3) {
    throw ConfigError("synth: need users >= 1, feature_dim >= 1, per_user >= 3");
  }
  if (spec.within_prob < 0.0 || spec.within_prob > 1.0) {
    throw ConfigError("synth: within_prob must lie in [0,1]");
  }
  const int items_per_cluster = spec.num_items / spec.num_clusters;
  const int per_user = std::min(spec.per_user, spec.num_items);

  std::vector<int> labels(spec.num_items);
  for (int i = 0; i < spec.num_items; ++i) labels[i] = i / items_per_cluster;

  SynthData out;
  out.item_labels = labels;

  // Interactions. Within a cluster, item popularity follows a Zipf law over
  // the item's rank inside the cluster (exponent 0 = uniform); popular head
  // items and a cold tail make graph-based propagation matter.
  Rng inter = Rng::substream(spec.seed, "synth-interactions");
  std::vector<double> within_cdf(items_per_cluster);
  {
    double total = 0.0;
    for (int r = 0; r < items_per_cluster; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), spec.popularity_exponent);
      within_cdf[r] = total;
    }
    for (double& v : within_cdf) v /= total;
  }
  const auto draw_in_cluster = [&](int cluster, Rng& rng) {
    const double u = rng.uniform();
    const int rank = static_cast<int>(
        std::lower_bound(within_cdf.begin(), within_cdf.end(), u) - within_cdf.begin());
    return cluster * items_per_cluster + std::min(rank, items_per_cluster - 1);
  };

  std::vector<std::pair<std::string, std::string>> pairs;
  const auto pad = [](const char* prefix, int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%06d", prefix, v);
    return std::string(buf);
  };
  for (int u = 0; u < spec.num_users; ++u) {
    const int uc = u % spec.num_clusters;
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < per_user) {
      int item;
      if (spec.num_clusters == 1 || inter.bernoulli(spec.within_prob)) {
        item = draw_in_cluster(uc, inter);
      } else {
        do {
          item = static_cast<int>(inter.uniform_index(spec.num_items));
        } while (labels[item] == uc);
      }
      chosen.insert(item);
    }
    for (int item : chosen) pairs.emplace_back(pad("u", u), pad("i", item));
  }
  out.dataset = detail::build_from_pairs(pairs, spec.seed);
  // Zero-padded ids sort numerically, so item index == generator index.
  out.dataset.item_labels.resize(out.dataset.num_items());
  for (int i = 0; i < out.dataset.num_items(); ++i) {
    out.dataset.item_labels[i] = labels[std::stoi(out.dataset.item_ids[i].substr(1))];
  }

  // Features: per-modality cluster centroids plus isotropic noise.
  const auto make_features = [&](const std::string& modality, double noise) {
    Rng rng = Rng::substream(spec.seed, "synth-feat-" + modality);
    std::vector<DenseMatrix> centroids;
    for (int c = 0; c < spec.num_clusters; ++c) {
      DenseMatrix mu(1, spec.feature_dim);
      for (double& v : mu.data()) v = rng.normal();
      centroids.push_back(std::move(mu));
    }
    ModalityFeatures feat;
    feat.modality = modality;
    feat.values = DenseMatrix(out.dataset.num_items(), spec.feature_dim);
    feat.missing.assign(out.dataset.num_items(), 0);
    for (int i = 0; i < out.dataset.num_items(); ++i) {
      const DenseMatrix& mu = centroids[out.dataset.item_labels[i]];
      for (int j = 0; j < spec.feature_dim; ++j) {
        feat.values(i, j) = mu(0, j) + noise * rng.normal();
      }
    }
    return feat;
  };
  out.visual = make_features("visual", spec.visual_noise());
  out.textual = make_features("textual", spec.noise_level);
  return out;
}

}  // namespace igdm
