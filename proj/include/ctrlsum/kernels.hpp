#pragma once

// Dense arithmetic kernels behind every inner loop in the toolkit (cosine
// tables, recurrent and affine layers, k-means distances).
//
// Each kernel has a scalar reference implementation plus SIMD variants (AVX2+FMA
// on x86-64, NEON on aarch64). The variant is chosen once at startup from CPU
// features; CTRLSUM_SIMD=scalar|avx2|neon overrides the choice. SIMD variants
// reassociate sums, so results agree with the scalar path to rounding, not bit
// for bit. Within one backend every kernel is deterministic.

#include <cassert>
#include <cstddef>
#include <span>
#include <string_view>

namespace ctrlsum::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += W x, W is rows x cols row-major
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y += W^T x
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // A += alpha * x y^T, A is rows x cols row-major
  void (*rank1_update)(double* a, std::size_t rows, std::size_t cols, double alpha, const double* x,
                       const double* y);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool backend_available(Backend backend);
Backend active_backend();
/// Throws ctrlsum::Error if the backend is unavailable on this machine.
void set_backend(Backend backend);
const KernelTable& active();

std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
  active().gemv(w.data(), rows, cols, x.data(), y.data());
}

inline void gemv_t(std::span<const double> w, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == rows && y.size() == cols);
  active().gemv_t(w.data(), rows, cols, x.data(), y.data());
}

inline void rank1_update(std::span<double> a, std::size_t rows, std::size_t cols, double alpha,
                         std::span<const double> x, std::span<const double> y) {
  assert(a.size() == rows * cols && x.size() == rows && y.size() == cols);
  active().rank1_update(a.data(), rows, cols, alpha, x.data(), y.data());
}

}  // namespace ctrlsum::kernels
