#pragma once

#include <vector>

#include "igdm/matrix.hpp"

namespace igdm {

// Column-compressed mirror of a dense adjacency matrix. Propagation runs on
// this form; the dense original stays around for construction and export.
class SparseCsc {
 public:
  SparseCsc() : rows_(0), cols_(0) {}

  explicit SparseCsc(const DenseMatrix& dense) : rows_(dense.rows()), cols_(dense.cols()) {
    col_ptr_.assign(cols_ + 1, 0);
    for (int j = 0; j < cols_; ++j) {
      for (int i = 0; i < rows_; ++i) {
        if (dense(i, j) != 0.0) {
          row_idx_.push_back(i);
          values_.push_back(dense(i, j));
        }
      }
      col_ptr_[j + 1] = static_cast<int>(row_idx_.size());
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(values_.size()); }

  // Y = S * X. Entries are applied column-by-column, so each output element
  // accumulates in a fixed order regardless of context.
  DenseMatrix multiply(const DenseMatrix& x) const {
    if (cols_ != x.rows()) {
      throw ContractError("spmm: inner dimension mismatch " + std::to_string(rows_) + "x" +
                          std::to_string(cols_) + " vs " + x.shape_str());
    }
    DenseMatrix y(rows_, x.cols());
    for (int c = 0; c < cols_; ++c) {
      for (int e = col_ptr_[c]; e < col_ptr_[c + 1]; ++e) {
        const int r = row_idx_[e];
        const double v = values_[e];
        for (int j = 0; j < x.cols(); ++j) y(r, j) += v * x(c, j);
      }
    }
    return y;
  }

  // Y = S^T * X.
  DenseMatrix multiply_transpose(const DenseMatrix& x) const {
    if (rows_ != x.rows()) {
      throw ContractError("spmm^T: inner dimension mismatch " + std::to_string(cols_) + "x" +
                          std::to_string(rows_) + " vs " + x.shape_str());
    }
    DenseMatrix y(cols_, x.cols());
    for (int c = 0; c < cols_; ++c) {
      for (int e = col_ptr_[c]; e < col_ptr_[c + 1]; ++e) {
        const int r = row_idx_[e];
        const double v = values_[e];
        for (int j = 0; j < x.cols(); ++j) y(c, j) += v * x(r, j);
      }
    }
    return y;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (int c = 0; c < cols_; ++c)
      for (int e = col_ptr_[c]; e < col_ptr_[c + 1]; ++e) d(row_idx_[e], c) = values_[e];
    return d;
  }

 private:
  int rows_;
  int cols_;
  std::vector<int> col_ptr_;
  std::vector<int> row_idx_;
  std::vector<double> values_;
};

}  // namespace igdm
