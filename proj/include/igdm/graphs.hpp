#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "igdm/dataset.hpp"
#include "igdm/errors.hpp"
#include "igdm/matrix.hpp"
#include "igdm/sparse.hpp"

namespace igdm {

// Pairwise cosine similarity of feature rows. Rows with zero norm yield
// similarity 0 to everything, including themselves.
inline DenseMatrix cosine_similarity_matrix(const DenseMatrix& features) {
  const int n = features.rows();
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) norms[i] = row_norm(features, i);
  DenseMatrix sims(n, n);
  for (int i = 0; i < n; ++i) {
    if (norms[i] == 0.0) continue;
    for (int j = i; j < n; ++j) {
      if (norms[j] == 0.0) continue;
      const double s = dot_rows(features, i, features, j) / (norms[i] * norms[j]);
      sims(i, j) = s;
      sims(j, i) = s;
    }
  }
  return sims;
}

namespace detail {

// Indices of the k largest entries of a column, ties broken by smaller row
// index. Assumes k >= 1; returns min(k, n) indices.
inline std::vector<int> top_k_of_column(const DenseMatrix& m, int col, int k,
                                        bool skip_diagonal = false) {
  std::vector<std::pair<double, int>> entries;
  entries.reserve(m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    if (skip_diagonal && i == col) continue;
    entries.emplace_back(m(i, col), i);
  }
  const size_t take = std::min(static_cast<size_t>(k), entries.size());
  std::partial_sort(entries.begin(), entries.begin() + take, entries.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<int> out;
  out.reserve(take);
  for (size_t e = 0; e < take; ++e) out.push_back(entries[e].second);
  return out;
}

}  // namespace detail

// Per-column top-k binarization of a similarity matrix. The diagonal competes
// like any other entry; with cosine input the self-similarity of 1 normally
// claims a slot.
inline DenseMatrix knn_columns(const DenseMatrix& sims, int k) {
  if (k < 1) throw ConfigError("knn: k must be >= 1, got " + std::to_string(k));
  if (sims.rows() != sims.cols()) {
    throw ContractError("knn: matrix must be square, got " + sims.shape_str());
  }
  const int n = sims.rows();
  DenseMatrix adj(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i : detail::top_k_of_column(sims, j, k)) adj(i, j) = 1.0;
  }
  return adj;
}

// S = sum_m phi_m * S^m with the weights summing to one.
inline DenseMatrix fuse_modalities(const std::map<std::string, DenseMatrix>& graphs,
                                   const std::map<std::string, double>& weights) {
  if (graphs.empty()) throw ConfigError("fuse: no modality graphs given");
  double total = 0.0;
  for (const auto& [name, w] : weights) total += w;
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("fuse: modality weights sum to " + std::to_string(total) + ", expected 1");
  }
  DenseMatrix fused;
  bool first = true;
  for (const auto& [name, g] : graphs) {
    const auto it = weights.find(name);
    if (it == weights.end()) throw ConfigError("fuse: no weight for modality `" + name + "`");
    if (first) {
      fused = scale(g, it->second);
      first = false;
    } else {
      detail::require_same_shape(fused, g, "fuse");
      for (size_t idx = 0; idx < fused.size(); ++idx) {
        fused.data()[idx] += it->second * g.data()[idx];
      }
    }
  }
  return fused;
}

struct SemanticGraph {
  std::map<std::string, DenseMatrix> per_modality;  // binary S^m
  DenseMatrix fused;                                // S, the diffusion substrate
  int k = 0;
};

inline SemanticGraph build_semantic(const std::vector<ModalityFeatures>& features,
                                    const std::map<std::string, double>& weights, int k) {
  SemanticGraph g;
  g.k = k;
  for (const ModalityFeatures& f : features) {
    g.per_modality[f.modality] = knn_columns(cosine_similarity_matrix(f.values), k);
  }
  g.fused = fuse_modalities(g.per_modality, weights);
  return g;
}

// Co-occurrence counts pruned to the per-column top-k off-diagonal entries
// strictly above epsilon; the diagonal is forced to 1.
inline DenseMatrix build_behavioral(const InteractionDataset& ds, int k, double epsilon) {
  if (k < 1) throw ConfigError("behavioral: k must be >= 1, got " + std::to_string(k));
  const int n = ds.num_items();
  DenseMatrix counts(n, n);
  for (int u = 0; u < ds.num_users(); ++u) {
    const auto& items = ds.user_train_items[u];
    for (size_t a = 0; a < items.size(); ++a) {
      for (size_t b = a + 1; b < items.size(); ++b) {
        counts(items[a], items[b]) += 1.0;
        counts(items[b], items[a]) += 1.0;
      }
    }
  }
  DenseMatrix out(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i : detail::top_k_of_column(counts, j, k, /*skip_diagonal=*/true)) {
      if (counts(i, j) > epsilon) out(i, j) = counts(i, j);
    }
    out(j, j) = 1.0;
  }
  return out;
}

// D^{-1/2} S D^{-1/2} with row-sum degrees; zero-degree rows stay zero.
inline DenseMatrix normalize_sym(const DenseMatrix& s) {
  if (s.rows() != s.cols()) {
    throw ContractError("normalize_sym: matrix must be square, got " + s.shape_str());
  }
  const int n = s.rows();
  std::vector<double> inv_sqrt(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (int j = 0; j < n; ++j) d += s(i, j);
    if (d > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  DenseMatrix out(n, n);
  for (int i = 0; i < n; ++i) {
    if (inv_sqrt[i] == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      // inv_i * inv_j first: commutative, so symmetric input stays bit-symmetric
      if (s(i, j) != 0.0) out(i, j) = s(i, j) * (inv_sqrt[i] * inv_sqrt[j]);
    }
  }
  return out;
}

// The (|U|+|I|) x (|U|+|I|) block matrix [[0, A], [A^T, 0]] from the train
// split, mainly for tests; training uses the normalized sparse form below.
inline DenseMatrix bipartite_dense(const InteractionDataset& ds) {
  const int nu = ds.num_users();
  const int ni = ds.num_items();
  DenseMatrix a(nu + ni, nu + ni);
  for (const auto& [u, i] : ds.train) {
    a(u, nu + i) = 1.0;
    a(nu + i, u) = 1.0;
  }
  return a;
}

// Symmetric-normalized bipartite adjacency, built directly in sparse form.
// Equivalent to normalize_sym(bipartite_dense(ds)).
inline SparseCsc build_bipartite(const InteractionDataset& ds) {
  const int nu = ds.num_users();
  const int ni = ds.num_items();
  if (ds.train.empty()) throw ContractError("bipartite: train split is empty");
  std::vector<double> user_deg(nu, 0.0), item_deg(ni, 0.0);
  for (const auto& [u, i] : ds.train) {
    user_deg[u] += 1.0;
    item_deg[i] += 1.0;
  }
  DenseMatrix a(nu + ni, nu + ni);
  for (const auto& [u, i] : ds.train) {
    const double v = 1.0 / std::sqrt(user_deg[u] * item_deg[i]);
    a(u, nu + i) = v;
    a(nu + i, u) = v;
  }
  return SparseCsc(a);
}

// ---------------------------------------------------------------------------
// Edge-list export: `i<TAB>j<TAB>weight` after a dims header. %.17g makes the
// round-trip bit-exact.

inline void write_edge_list(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "dims\t" << m.rows() << "\t" << m.cols() << "\n";
  char buf[64];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (m(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%d\t%d\t%.17g\n", i, j, m(i, j));
      out << buf;
    }
  }
}

inline DenseMatrix read_edge_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open edge list: " + path);
  std::string line;
  long line_no = 0;
  DenseMatrix m;
  bool have_dims = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_dims) {
      int r, c;
      if (std::sscanf(line.c_str(), "dims\t%d\t%d", &r, &c) != 2) {
        throw InputError(path + ":" + std::to_string(line_no) + ": expected dims header");
      }
      m = DenseMatrix(r, c);
      have_dims = true;
      continue;
    }
    int i, j;
    double w;
    if (std::sscanf(line.c_str(), "%d\t%d\t%lg", &i, &j, &w) != 3) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected `i<TAB>j<TAB>weight`");
    }
    if (i < 0 || i >= m.rows() || j < 0 || j >= m.cols()) {
      throw InputError(path + ":" + std::to_string(line_no) + ": index out of range");
    }
    m(i, j) = w;
  }
  if (!have_dims) throw InputError(path + ": empty edge list");
  return m;
}

}  // namespace igdm
