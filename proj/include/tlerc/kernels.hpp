#pragma once

#include <cstddef>
#include <span>

// Dense linear-algebra kernels behind the tape primitives.
//
// Each kernel has a serial reference and an OpenMP variant. The parallel
// variants split work so that every output element is accumulated by a single
// thread in the same order as the serial loop, which keeps results
// bit-identical across thread counts.
namespace tlerc::kernels {

// y = W x (+ b if non-empty). W is rows x cols, row-major.
void matvec_serial(std::span<const double> W, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<const double> b,
                   std::span<double> y);
void matvec_parallel(std::span<const double> W, std::size_t rows, std::size_t cols,
                     std::span<const double> x, std::span<const double> b,
                     std::span<double> y);

// x_grad += W^T g.
void matvec_transposed_acc_serial(std::span<const double> W, std::size_t rows,
                                  std::size_t cols, std::span<const double> g,
                                  std::span<double> x_grad);
void matvec_transposed_acc_parallel(std::span<const double> W, std::size_t rows,
                                    std::size_t cols, std::span<const double> g,
                                    std::span<double> x_grad);

// W_grad += g x^T.
void outer_acc_serial(std::span<const double> g, std::span<const double> x,
                      std::span<double> W_grad);
void outer_acc_parallel(std::span<const double> g, std::span<const double> x,
                        std::span<double> W_grad);

// Matrices with at least this many entries take the OpenMP path, unless the
// caller is already inside a parallel region.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

bool use_parallel(std::size_t work);

inline void matvec(std::span<const double> W, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<const double> b,
                   std::span<double> y) {
  if (use_parallel(rows * cols))
    matvec_parallel(W, rows, cols, x, b, y);
  else
    matvec_serial(W, rows, cols, x, b, y);
}

inline void matvec_transposed_acc(std::span<const double> W, std::size_t rows,
                                  std::size_t cols, std::span<const double> g,
                                  std::span<double> x_grad) {
  if (use_parallel(rows * cols))
    matvec_transposed_acc_parallel(W, rows, cols, g, x_grad);
  else
    matvec_transposed_acc_serial(W, rows, cols, g, x_grad);
}

inline void outer_acc(std::span<const double> g, std::span<const double> x,
                      std::span<double> W_grad) {
  if (use_parallel(g.size() * x.size()))
    outer_acc_parallel(g, x, W_grad);
  else
    outer_acc_serial(g, x, W_grad);
}

}  // namespace tlerc::kernels
