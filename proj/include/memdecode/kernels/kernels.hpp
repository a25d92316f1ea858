// SPDX-License-Identifier: Apache-2.0
//
// Arithmetic inner loops shared by the whole pipeline. Every kernel has a
// portable scalar reference in scalar.cpp and vectorized variants that are
// selected once at startup from the CPU feature set. MEMDECODE_ISA=scalar in
// the environment forces the reference path.
#pragma once

#include <cstddef>
#include <string_view>

namespace memdecode::kernels {

enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);

/// C[m x n] (+)= sum_p A(i, p) * B[p * ldb + j], where
/// A(i, p) = a[i * a_row_stride + p * a_col_stride].
/// Strided A covers both A*B (row stride lda, col stride 1) and A^T*B
/// (row stride 1, col stride lda), and overlapping rows for convolution
/// windows.
template <typename T>
struct GemmArgs {
  std::size_t m = 0, n = 0, k = 0;
  const T* a = nullptr;
  std::size_t a_row_stride = 0, a_col_stride = 1;
  const T* b = nullptr;
  std::size_t ldb = 0;
  T* c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
};

struct KernelTable {
  Isa isa;
  void (*gemm_f32)(const GemmArgs<float>&);
  void (*gemm_f64)(const GemmArgs<double>&);
  /// y[t] = sum_i taps[i] * x[t + (n_taps - 1) / 2 - i], zero outside [0, n).
  void (*fir_same_f64)(const double* x, std::size_t n, const double* taps, std::size_t n_taps,
                       double* y);
  /// out[r] = ||q - refs[r]||^2 accumulated in double.
  void (*sq_dist_f32)(const float* q, const float* refs, std::size_t n_refs, std::size_t dim,
                      double* out);
  void (*rmsprop_f32)(float* p, const float* g, float* v, std::size_t n, float lr, float decay,
                      float eps);
  void (*rmsprop_f64)(double* p, const double* g, double* v, std::size_t n, double lr,
                      double decay, double eps);
};

const KernelTable& scalar_table();
/// Null when the library was built without the variant.
const KernelTable* avx2_table();
const KernelTable* avx512_table();

bool supported(Isa isa);
Isa best_supported();

/// Table used by the wrappers below.
const KernelTable& active();
/// Switch the active table; throws memdecode::Error if unsupported.
void use(Isa isa);

/// Scoped override, restoring the previous selection on exit.
class IsaScope {
 public:
  explicit IsaScope(Isa isa);
  ~IsaScope();
  IsaScope(const IsaScope&) = delete;
  IsaScope& operator=(const IsaScope&) = delete;

 private:
  Isa previous_;
};

inline void gemm(const GemmArgs<float>& args) { active().gemm_f32(args); }
inline void gemm(const GemmArgs<double>& args) { active().gemm_f64(args); }

inline void fir_same(const double* x, std::size_t n, const double* taps, std::size_t n_taps,
                     double* y) {
  active().fir_same_f64(x, n, taps, n_taps, y);
}

inline void sq_dist(const float* q, const float* refs, std::size_t n_refs, std::size_t dim,
                    double* out) {
  active().sq_dist_f32(q, refs, n_refs, dim, out);
}

inline void rmsprop(float* p, const float* g, float* v, std::size_t n, float lr, float decay,
                    float eps) {
  active().rmsprop_f32(p, g, v, n, lr, decay, eps);
}
inline void rmsprop(double* p, const double* g, double* v, std::size_t n, double lr,
                    double decay, double eps) {
  active().rmsprop_f64(p, g, v, n, lr, decay, eps);
}

}  // namespace memdecode::kernels
