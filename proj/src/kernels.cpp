#include "jrl/kernels.hpp"

#include <omp.h>

namespace jrl::kernels {

namespace serial {

void gemv(MatView a, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.data + r * a.cols;
    double sum = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) sum += row[c] * x[c];
    y[r] += sum;
  }
}

void gemv_t(MatView a, std::span<const double> x, std::span<double> y) {
  for (std::size_t c = 0; c < a.cols; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) sum += a.data[r * a.cols + c] * x[r];
    y[c] += sum;
  }
}

void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v) {
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double ur = s * u[r];
    if (ur == 0.0) continue;
    double* row = a.data + r * a.cols;
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
  }
}

}  // namespace serial

namespace parallel {

void gemv(MatView a, std::span<const double> x, std::span<double> y) {
  const auto rows = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double* row = a.data + r * a.cols;
    double sum = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) sum += row[c] * x[c];
    y[r] += sum;
  }
}

// Column-parallel so that each output keeps the serial row order.
void gemv_t(MatView a, std::span<const double> x, std::span<double> y) {
  const auto cols = static_cast<std::ptrdiff_t>(a.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cols; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) sum += a.data[r * a.cols + c] * x[r];
    y[c] += sum;
  }
}

void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v) {
  const auto rows = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double ur = s * u[r];
    if (ur == 0.0) continue;
    double* row = a.data + r * a.cols;
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
  }
}

}  // namespace parallel

namespace {
bool use_parallel(std::size_t elements) {
  return elements >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}
}  // namespace

void gemv(MatView a, std::span<const double> x, std::span<double> y) {
  if (use_parallel(a.rows * a.cols)) {
    parallel::gemv(a, x, y);
  } else {
    serial::gemv(a, x, y);
  }
}

void gemv_t(MatView a, std::span<const double> x, std::span<double> y) {
  if (use_parallel(a.rows * a.cols)) {
    parallel::gemv_t(a, x, y);
  } else {
    serial::gemv_t(a, x, y);
  }
}

void ger(MutMatView a, double s, std::span<const double> u, std::span<const double> v) {
  if (use_parallel(a.rows * a.cols)) {
    parallel::ger(a, s, u, v);
  } else {
    serial::ger(a, s, u, v);
  }
}

}  // namespace jrl::kernels
