#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace regent {

// Dense row-major matrix of doubles. All model math runs in double precision.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw std::invalid_argument("from_rows: ragged input");
      for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
  static Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                             std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& x : m.data_) x = dist(rng);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  void add_inplace(const Matrix& o) {
    check_same_shape(o, "add_inplace");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  }

  void scale_inplace(double c) {
    for (double& x : data_) x *= c;
  }

 private:
  void check_same_shape(const Matrix& o, const char* what) const {
    if (!same_shape(o))
      throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str() + " vs " +
                                  o.shape_str());
  }
  std::string shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = op(A) * op(B) with optional transposes.
inline Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a = false,
                     bool trans_b = false) {
  std::size_t ar = trans_a ? a.cols() : a.rows();
  std::size_t ac = trans_a ? a.rows() : a.cols();
  std::size_t br = trans_b ? b.cols() : b.rows();
  std::size_t bc = trans_b ? b.rows() : b.cols();
  if (ac != br)
    throw std::invalid_argument("matmul: inner dimension mismatch (" + std::to_string(ac) +
                                " vs " + std::to_string(br) + ")");
  Matrix c(ar, bc);
  for (std::size_t i = 0; i < ar; ++i) {
    for (std::size_t k = 0; k < ac; ++k) {
      double av = trans_a ? a(k, i) : a(i, k);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < bc; ++j) {
        double bv = trans_b ? b(j, k) : b(k, j);
        c(i, j) += av * bv;
      }
    }
  }
  return c;
}

}  // namespace regent
