#pragma once

#include <cstddef>
#include <span>

// Dense linear-algebra kernels in two flavours: a serial reference and an
// OpenMP version. Both compute every output element with the same
// accumulation order, so their results are bitwise identical.
namespace jrl::kernels {

// Matrices are row-major `rows x cols`.
struct MatView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
};

struct MutMatView {
  double* data;
  std::size_t rows;
  std::size_t cols;
};

namespace serial {
// y += A x
void gemv(MatView a, std::span<const double> x, std::span<double> y);
// y += A^T x
void gemv_t(MatView a, std::span<const double> x, std::span<double> y);
// A += s * u v^T
void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v);
}  // namespace serial

namespace parallel {
void gemv(MatView a, std::span<const double> x, std::span<double> y);
void gemv_t(MatView a, std::span<const double> x, std::span<double> y);
void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v);
}  // namespace parallel

// Matrices with fewer elements than this run on the serial path; below it
// the fork/join overhead dominates.
inline constexpr std::size_t kParallelThreshold = 1 << 16;

void gemv(MatView a, std::span<const double> x, std::span<double> y);
void gemv_t(MatView a, std::span<const double> x, std::span<double> y);
void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v);

}  // namespace jrl::kernels
