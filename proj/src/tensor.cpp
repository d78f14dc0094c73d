#include "bmim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include "bmim/errors.hpp"

namespace bmim {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ContractError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

static void check(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(), "gemm_acc: shape mismatch");
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * a.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.cols() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows(), "gemm_nt_acc: shape mismatch");
  const std::size_t kk = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * kk;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data() + j * kk;
      double s = 0.0;
      for (std::size_t k = 0; k < kk; ++k) s += arow[k] * brow[k];
      c(i, j) += s;
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols(), "gemm_tn_acc: shape mismatch");
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * a.cols();
    const double* brow = b.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      double* crow = c.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  gemm_acc(a, b, c);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void add_inplace(Matrix& out, const Matrix& a, double scale) {
  check(out.same_shape(a), "add_inplace: shape mismatch");
  double* o = out.data();
  const double* x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += scale * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  check(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace bmim
