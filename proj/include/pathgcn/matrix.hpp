#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathgcn {

/// Dense row-major matrix. Node features, activations and their gradients
/// all travel through the network as `Matrix<double>` (n rows, c channels).
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Matrix: data size " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using FeatureMatrix = Matrix<double>;

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.storage().begin(), m.storage().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
T dot(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.storage()[i] * b.storage()[i];
  return acc;
}

template <typename T>
T max_abs(const Matrix<T>& m) {
  T best{};
  for (T v : m.storage()) best = std::max(best, std::abs(v));
  return best;
}

/// out += alpha * x
template <typename T>
void axpy(T alpha, const Matrix<T>& x, Matrix<T>& out) {
  if (!x.same_shape(out)) throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out.storage()[i] += alpha * x.storage()[i];
}

inline void require_shape(bool ok, const char* where, const std::string& detail) {
  if (!ok) throw std::invalid_argument(std::string(where) + ": shape mismatch (" + detail + ")");
}

}  // namespace pathgcn
