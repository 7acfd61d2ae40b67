#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace jrl {

// Dense double-precision vector.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(double value);
  Vec& operator+=(const Vec& other);
  Vec& operator-=(const Vec& other);
  Vec& operator*=(double scale);

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> data_;
};

// Dense row-major matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double value);

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = m v
Vec matvec(const Mat& m, const Vec& v);
// y = m^T v
Vec matvec_transposed(const Mat& m, const Vec& v);
// y += m v
void matvec_accumulate(const Mat& m, const Vec& v, Vec& y);
// y += m^T v
void matvec_transposed_accumulate(const Mat& m, const Vec& v, Vec& y);
// m += scale * a b^T
void add_outer(Mat& m, const Vec& a, const Vec& b, double scale = 1.0);

Vec sigmoid(const Vec& v);
Vec tanh(const Vec& v);
Vec hadamard(const Vec& a, const Vec& b);
Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& v);
double dot(const Vec& a, const Vec& b);
// y += s * x
void axpy(double s, const Vec& x, Vec& y);

// Max-subtracted softmax; the result sums to one for any finite input.
Vec softmax(const Vec& v);
double log_sum_exp(const Vec& v);

double sigmoid(double x);

bool all_finite(std::span<const double> values);
inline bool all_finite(const Vec& v) { return all_finite(v.values()); }
inline bool all_finite(const Mat& m) { return all_finite(m.values()); }

std::string shape_string(const Mat& m);

// SplitMix64 finaliser; used to derive independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded generator with a platform-stable sample stream. The engine is
// mt19937_64 (fully specified by the standard); real-valued draws are built
// from raw 64-bit outputs instead of std:: distributions, whose algorithms
// are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

void fill_uniform(Mat& m, Rng& rng, double radius);
void fill_uniform(Vec& v, Rng& rng, double radius);

}  // namespace jrl
