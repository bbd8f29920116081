#include "tlerc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tlerc::kernels {

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelThreshold && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}

void matvec_serial(std::span<const double> W, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<const double> b,
                   std::span<double> y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = b.empty() ? acc : acc + b[i];
  }
}

void matvec_parallel(std::span<const double> W, std::size_t rows, std::size_t cols,
                     std::span<const double> x, std::span<const double> b,
                     std::span<double> y) {
  const auto n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* row = W.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = b.empty() ? acc : acc + b[i];
  }
}

void matvec_transposed_acc_serial(std::span<const double> W, std::size_t rows,
                                  std::size_t cols, std::span<const double> g,
                                  std::span<double> x_grad) {
  // Row-outer for locality; each x_grad[j] still accumulates in ascending i.
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W.data() + i * cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < cols; ++j) x_grad[j] += row[j] * gi;
  }
}

void matvec_transposed_acc_parallel(std::span<const double> W, std::size_t rows,
                                    std::size_t cols, std::span<const double> g,
                                    std::span<double> x_grad) {
  const auto n = static_cast<long long>(cols);
#pragma omp parallel for schedule(static)
  for (long long jj = 0; jj < n; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    double acc = x_grad[j];
    for (std::size_t i = 0; i < rows; ++i) acc += W[i * cols + j] * g[i];
    x_grad[j] = acc;
  }
}

void outer_acc_serial(std::span<const double> g, std::span<const double> x,
                      std::span<double> W_grad) {
  const std::size_t cols = x.size();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double* row = W_grad.data() + i * cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

void outer_acc_parallel(std::span<const double> g, std::span<const double> x,
                        std::span<double> W_grad) {
  const std::size_t cols = x.size();
  const auto n = static_cast<long long>(g.size());
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* row = W_grad.data() + i * cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

}  // namespace tlerc::kernels
