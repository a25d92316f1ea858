// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Plain loops with double accumulators; these define the
// numerics the vectorized variants are tested against.

#include <cmath>

#include "memdecode/kernels/kernels.hpp"

namespace memdecode::kernels {
namespace {

template <typename T>
void gemm_ref(const GemmArgs<T>& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double acc = g.accumulate ? static_cast<double>(g.c[i * g.ldc + j]) : 0.0;
      for (std::size_t p = 0; p < g.k; ++p) {
        acc += static_cast<double>(g.a[i * g.a_row_stride + p * g.a_col_stride]) *
               static_cast<double>(g.b[p * g.ldb + j]);
      }
      g.c[i * g.ldc + j] = static_cast<T>(acc);
    }
  }
}

void fir_same_ref(const double* x, std::size_t n, const double* taps, std::size_t n_taps,
                  double* y) {
  const auto half = static_cast<std::ptrdiff_t>((n_taps - 1) / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t t = 0; t < len; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_taps; ++i) {
      const std::ptrdiff_t src = t + half - static_cast<std::ptrdiff_t>(i);
      if (src >= 0 && src < len) acc += taps[i] * x[src];
    }
    y[t] = acc;
  }
}

void sq_dist_ref(const float* q, const float* refs, std::size_t n_refs, std::size_t dim,
                 double* out) {
  for (std::size_t r = 0; r < n_refs; ++r) {
    const float* row = refs + r * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(q[d]) - static_cast<double>(row[d]);
      acc += diff * diff;
    }
    out[r] = acc;
  }
}

template <typename T>
void rmsprop_ref(T* p, const T* g, T* v, std::size_t n, T lr, T decay, T eps) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = decay * v[i] + (T(1) - decay) * g[i] * g[i];
    p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
  }
}

constexpr KernelTable kScalar{
    Isa::scalar,          &gemm_ref<float>,     &gemm_ref<double>,    &fir_same_ref,
    &sq_dist_ref,         &rmsprop_ref<float>,  &rmsprop_ref<double>,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace memdecode::kernels
