#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "igdm/errors.hpp"

namespace igdm {

// Dense row-major matrix of 64-bit floats. The workhorse value type for
// embeddings, adjacency matrices and every tape intermediate.
class DenseMatrix {
 public:
  DenseMatrix() : rows_(0), cols_(0) {}
  DenseMatrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) {
      throw ContractError("DenseMatrix: negative shape " + shape_str());
    }
  }
  DenseMatrix(int rows, int cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<size_t>(rows) * cols) {
      throw ContractError("DenseMatrix: data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str());
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Gate for externally sourced values; internal intermediates are checked at
  // the loss/gradient boundary instead.
  void require_finite(const std::string& what) const {
    if (!all_finite()) {
      throw InputError(what + ": non-finite entry in " + shape_str() + " matrix");
    }
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  static DenseMatrix identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}
}  // namespace detail

// C = A * B. Fixed summation order (k ascending) per output element.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  DenseMatrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

// C = A * B^T.
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractError("matmul_nt: inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str() + "^T");
  }
  DenseMatrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  }
  return c;
}

// C = A^T * B.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractError("matmul_tn: inner dimension mismatch " + a.shape_str() + "^T vs " + b.shape_str());
  }
  DenseMatrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  }
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "add");
  DenseMatrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "sub");
  DenseMatrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "elementwise-mul");
  DenseMatrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline DenseMatrix scale(const DenseMatrix& a, double s) {
  DenseMatrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

inline double sum_all(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

inline double dot_rows(const DenseMatrix& a, int ra, const DenseMatrix& b, int rb) {
  double s = 0.0;
  for (int j = 0; j < a.cols(); ++j) s += a(ra, j) * b(rb, j);
  return s;
}

inline double row_norm(const DenseMatrix& a, int r) {
  double s = 0.0;
  for (int j = 0; j < a.cols(); ++j) s += a(r, j) * a(r, j);
  return std::sqrt(s);
}

}  // namespace igdm
