#include "jrl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "jrl/errors.hpp"
#include "jrl/kernels.hpp"

namespace jrl {

namespace {

void require_same_length(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    std::ostringstream os;
    os << op << ": length mismatch " << a.size() << " vs " << b.size();
    throw ContractError(os.str());
  }
}

kernels::MatView view(const Mat& m) { return {m.data(), m.rows(), m.cols()}; }

}  // namespace

void Vec::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Vec& Vec::operator+=(const Vec& other) {
  require_same_length(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Vec& Vec::operator-=(const Vec& other) {
  require_same_length(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Vec& Vec::operator*=(double scale) {
  for (double& x : data_) x *= scale;
  return *this;
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Mat::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Vec matvec(const Mat& m, const Vec& v) {
  Vec y(m.rows());
  matvec_accumulate(m, v, y);
  return y;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
  Vec y(m.cols());
  matvec_transposed_accumulate(m, v, y);
  return y;
}

void matvec_accumulate(const Mat& m, const Vec& v, Vec& y) {
  if (m.cols() != v.size() || m.rows() != y.size()) {
    throw ContractError("matvec: matrix " + shape_string(m) + " vs vector " + std::to_string(v.size()) +
                        " -> " + std::to_string(y.size()));
  }
  kernels::gemv(view(m), v.values(), y.values());
}

void matvec_transposed_accumulate(const Mat& m, const Vec& v, Vec& y) {
  if (m.rows() != v.size() || m.cols() != y.size()) {
    throw ContractError("matvec_transposed: matrix " + shape_string(m) + " vs vector " +
                        std::to_string(v.size()) + " -> " + std::to_string(y.size()));
  }
  kernels::gemv_t(view(m), v.values(), y.values());
}

void add_outer(Mat& m, const Vec& a, const Vec& b, double scale) {
  if (m.rows() != a.size() || m.cols() != b.size()) {
    throw ContractError("add_outer: matrix " + shape_string(m) + " vs " + std::to_string(a.size()) + "x" +
                        std::to_string(b.size()));
  }
  kernels::ger({m.data(), m.rows(), m.cols()}, scale, a.values(), b.values());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec sigmoid(const Vec& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

Vec tanh(const Vec& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

Vec hadamard(const Vec& a, const Vec& b) {
  require_same_length(a, b, "hadamard");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vec operator+(const Vec& a, const Vec& b) {
  Vec out = a;
  out += b;
  return out;
}

Vec operator-(const Vec& a, const Vec& b) {
  Vec out = a;
  out -= b;
  return out;
}

Vec operator*(double s, const Vec& v) {
  Vec out = v;
  out *= s;
  return out;
}

double dot(const Vec& a, const Vec& b) {
  require_same_length(a, b, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double s, const Vec& x, Vec& y) {
  require_same_length(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

Vec softmax(const Vec& v) {
  require(!v.empty(), "softmax: empty input");
  const double peak = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

double log_sum_exp(const Vec& v) {
  require(!v.empty(), "log_sum_exp: empty input");
  const double peak = *std::max_element(v.begin(), v.end());
  if (std::isinf(peak)) return peak;
  double total = 0.0;
  for (double x : v) total += std::exp(x - peak);
  return peak + std::log(total);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  require(n > 0, "Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

void fill_uniform(Mat& m, Rng& rng, double radius) {
  for (double& x : m.values()) x = rng.uniform(-radius, radius);
}

void fill_uniform(Vec& v, Rng& rng, double radius) {
  for (double& x : v) x = rng.uniform(-radius, radius);
}

}  // namespace jrl
