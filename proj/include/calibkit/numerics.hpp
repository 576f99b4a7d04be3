#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace calibkit {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;
  Matrix transposed() const;
  /// Rows picked by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-wise softmax with per-row max subtraction. Throws on non-finite input.
Matrix softmax_rows(const Matrix& logits);

/// a * b, accumulated left to right over the inner dimension.
Matrix matmul(const Matrix& a, const Matrix& b);

/// splitmix64 generator. Same seed gives the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);
  /// Standard normal via Box-Muller (cosine branch only, no cached state).
  double next_normal();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// The splitmix64 output mix applied to a single word.
std::uint64_t splitmix64_mix(std::uint64_t x);

/// Sub-seed for an independent stream: mix(seed ^ mix(fnv1a64(tag))).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> rng_shuffle(Rng& rng, std::size_t n);

}  // namespace calibkit
