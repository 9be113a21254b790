#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "igdm/dataset.hpp"
#include "igdm/matrix.hpp"

namespace igdm {

// Per-user ordered top-k item lists over all non-train items. Ties broken by
// smaller item index.
struct RankingResult {
  std::vector<std::vector<int>> lists;
  int k_max = 0;
};

inline RankingResult rank_all(const DenseMatrix& user_reps, const DenseMatrix& item_reps,
                              const InteractionDataset& ds, int k_max) {
  RankingResult out;
  out.k_max = k_max;
  out.lists.resize(ds.num_users());
  const int ni = ds.num_items();
  std::vector<std::pair<double, int>> candidates;
  for (int u = 0; u < ds.num_users(); ++u) {
    candidates.clear();
    for (int i = 0; i < ni; ++i) {
      if (ds.user_has_train_item(u, i)) continue;  // train positives masked
      candidates.emplace_back(dot_rows(user_reps, u, item_reps, i), i);
    }
    const size_t take = std::min(static_cast<size_t>(k_max), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    auto& list = out.lists[u];
    list.reserve(take);
    for (size_t e = 0; e < take; ++e) list.push_back(candidates[e].second);
  }
  return out;
}

// Mean of |top-k ∩ relevant| / |relevant| over users with at least one
// relevant item. Users with empty relevance sets are excluded from the mean.
inline double recall_at_k(const RankingResult& ranking,
                          const std::vector<std::vector<int>>& relevant, int k) {
  double total = 0.0;
  long counted = 0;
  for (size_t u = 0; u < ranking.lists.size(); ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;
    ++counted;
    int hits = 0;
    const auto& list = ranking.lists[u];
    const int limit = std::min<int>(k, static_cast<int>(list.size()));
    for (int r = 0; r < limit; ++r) {
      if (std::binary_search(rel.begin(), rel.end(), list[r])) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(rel.size());
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

// Binary-relevance NDCG: DCG sums 1/log2(rank+1) over hits, IDCG assumes the
// first min(|relevant|, k) ranks are all hits.
inline double ndcg_at_k(const RankingResult& ranking,
                        const std::vector<std::vector<int>>& relevant, int k) {
  double total = 0.0;
  long counted = 0;
  for (size_t u = 0; u < ranking.lists.size(); ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;
    ++counted;
    double dcg = 0.0;
    const auto& list = ranking.lists[u];
    const int limit = std::min<int>(k, static_cast<int>(list.size()));
    for (int r = 0; r < limit; ++r) {
      if (std::binary_search(rel.begin(), rel.end(), list[r])) {
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      }
    }
    double idcg = 0.0;
    const int ideal = std::min<int>(static_cast<int>(rel.size()), k);
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    total += dcg / idcg;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

struct MetricReport {
  double r10 = 0.0;
  double r20 = 0.0;
  double n10 = 0.0;
  double n20 = 0.0;
};

inline MetricReport compute_metrics(const DenseMatrix& user_reps, const DenseMatrix& item_reps,
                                    const InteractionDataset& ds,
                                    const std::vector<std::vector<int>>& relevant) {
  const RankingResult ranking = rank_all(user_reps, item_reps, ds, 20);
  MetricReport m;
  m.r10 = recall_at_k(ranking, relevant, 10);
  m.r20 = recall_at_k(ranking, relevant, 20);
  m.n10 = ndcg_at_k(ranking, relevant, 10);
  m.n20 = ndcg_at_k(ranking, relevant, 20);
  return m;
}

// Fraction of off-diagonal predicted edges whose endpoints share a planted
// cluster. An empty off-diagonal is vacuously perfect and flagged.
struct EdgePrecision {
  double precision = 1.0;
  long edges = 0;
  bool vacuous = true;
};

inline EdgePrecision graph_edge_precision(const DenseMatrix& adj, const std::vector<int>& labels) {
  if (adj.rows() != adj.cols() || adj.rows() != static_cast<int>(labels.size())) {
    throw ContractError("edge_precision: adjacency " + adj.shape_str() + " vs " +
                        std::to_string(labels.size()) + " labels");
  }
  EdgePrecision out;
  long within = 0;
  for (int i = 0; i < adj.rows(); ++i) {
    for (int j = 0; j < adj.cols(); ++j) {
      if (i == j || adj(i, j) == 0.0) continue;
      ++out.edges;
      if (labels[i] == labels[j]) ++within;
    }
  }
  if (out.edges > 0) {
    out.vacuous = false;
    out.precision = static_cast<double>(within) / static_cast<double>(out.edges);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles: an independent implementation of the same ranking and
// metric contracts, kept free of the partial-sort fast path above. Used by
// the acceptance suite for cross-checking; never by training.
namespace oracle {

inline std::vector<int> full_sort_ranking(const DenseMatrix& user_reps,
                                          const DenseMatrix& item_reps,
                                          const InteractionDataset& ds, int user) {
  std::vector<int> items;
  for (int i = 0; i < ds.num_items(); ++i) {
    bool is_train = false;
    for (int t : ds.user_train_items[user]) {
      if (t == i) is_train = true;
    }
    if (!is_train) items.push_back(i);
  }
  std::stable_sort(items.begin(), items.end(), [&](int a, int b) {
    const double sa = dot_rows(user_reps, user, item_reps, a);
    const double sb = dot_rows(user_reps, user, item_reps, b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return items;
}

inline double recall_at_k(const DenseMatrix& user_reps, const DenseMatrix& item_reps,
                          const InteractionDataset& ds,
                          const std::vector<std::vector<int>>& relevant, int k) {
  double total = 0.0;
  long counted = 0;
  for (int u = 0; u < ds.num_users(); ++u) {
    if (relevant[u].empty()) continue;
    ++counted;
    const std::vector<int> ranked = full_sort_ranking(user_reps, item_reps, ds, u);
    int hits = 0;
    for (int r = 0; r < k && r < static_cast<int>(ranked.size()); ++r) {
      for (int rel : relevant[u]) {
        if (ranked[r] == rel) ++hits;
      }
    }
    total += static_cast<double>(hits) / static_cast<double>(relevant[u].size());
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

inline double ndcg_at_k(const DenseMatrix& user_reps, const DenseMatrix& item_reps,
                        const InteractionDataset& ds,
                        const std::vector<std::vector<int>>& relevant, int k) {
  double total = 0.0;
  long counted = 0;
  for (int u = 0; u < ds.num_users(); ++u) {
    if (relevant[u].empty()) continue;
    ++counted;
    const std::vector<int> ranked = full_sort_ranking(user_reps, item_reps, ds, u);
    double dcg = 0.0;
    for (int r = 0; r < k && r < static_cast<int>(ranked.size()); ++r) {
      for (int rel : relevant[u]) {
        if (ranked[r] == rel) dcg += 1.0 / std::log2(r + 2.0);
      }
    }
    double idcg = 0.0;
    for (int r = 0; r < k && r < static_cast<int>(relevant[u].size()); ++r) {
      idcg += 1.0 / std::log2(r + 2.0);
    }
    total += dcg / idcg;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

}  // namespace oracle
}  // namespace igdm
