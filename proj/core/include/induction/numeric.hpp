#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace induction {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix transpose(const Matrix& a);
/// a · b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ; rows of the result are b applied to rows of a when b is a weight.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b, i.e. the sum of outer products of matching rows.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// out += scale · aᵀ · b without allocating.
void accumulate_tn(Matrix& out, const Matrix& a, const Matrix& b, double scale = 1.0);

Vector matvec(const Matrix& m, std::span<const double> x);
/// mᵀ x
Vector matvec_t(const Matrix& m, std::span<const double> x);
/// m += scale · u vᵀ
void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void axpy(double a, std::span<const double> x, std::span<double> y);
double frobenius(const Matrix& m);
double max_abs(const Matrix& m);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> v);

/// Max-subtracted softmax. Throws invalid_argument on empty input.
Vector softmax(std::span<const double> v);
/// First-order expansion of softmax around zero: (1/T)(1 + v_t - mean(v)).
Vector linearized_softmax(std::span<const double> v);
double log_sum_exp(std::span<const double> v);

/// Seeded mt19937_64 stream. Identical seeds give identical draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Draw from a discrete distribution given by nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  /// Independent stream derived from this seed and a stream index.
  Rng fork(std::uint64_t stream) const;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

Vector gaussian_unit_vector(std::size_t d, Rng& rng);
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace induction
