// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// only entered after a runtime CPU check. Float kernels accumulate in float
// lanes; results match the reference within rounding of the summation order.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "memdecode/kernels/kernels.hpp"
#include "packed_gemm.hpp"

namespace memdecode::kernels {
namespace {

struct F32 {
  using T = float;
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(T x) { return _mm256_set1_ps(x); }
  static reg load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
};

struct F64 {
  using T = double;
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(T x) { return _mm256_set1_pd(x); }
  static reg load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
};

void gemm_f32(const GemmArgs<float>& g) { packed::Gemm<F32, 6>::run(g); }
void gemm_f64(const GemmArgs<double>& g) { packed::Gemm<F64, 6>::run(g); }

void fir_same(const double* x, std::size_t n, const double* taps, std::size_t n_taps,
              double* y) {
  const std::size_t half = (n_taps - 1) / 2;
  // y[t] = sum_i rev[i] * pad[t + i] with rev the reversed taps.
  std::vector<double> pad(n + n_taps - 1 + 16, 0.0);
  std::copy(x, x + n, pad.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<double> rev(taps, taps + n_taps);
  std::reverse(rev.begin(), rev.end());

  std::size_t t = 0;
  for (; t + 16 <= n; t += 16) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    const double* base = pad.data() + t;
    for (std::size_t i = 0; i < n_taps; ++i) {
      const __m256d h = _mm256_set1_pd(rev[i]);
      a0 = _mm256_fmadd_pd(h, _mm256_loadu_pd(base + i), a0);
      a1 = _mm256_fmadd_pd(h, _mm256_loadu_pd(base + i + 4), a1);
      a2 = _mm256_fmadd_pd(h, _mm256_loadu_pd(base + i + 8), a2);
      a3 = _mm256_fmadd_pd(h, _mm256_loadu_pd(base + i + 12), a3);
    }
    _mm256_storeu_pd(y + t, a0);
    _mm256_storeu_pd(y + t + 4, a1);
    _mm256_storeu_pd(y + t + 8, a2);
    _mm256_storeu_pd(y + t + 12, a3);
  }
  for (; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_taps; ++i) acc += rev[i] * pad[t + i];
    y[t] = acc;
  }
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void sq_dist(const float* q, const float* refs, std::size_t n_refs, std::size_t dim,
             double* out) {
  const std::size_t d_main = dim - dim % 4;
  for (std::size_t r = 0; r < n_refs; ++r) {
    const float* row = refs + r * dim;
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t d = 0; d < d_main; d += 4) {
      const __m256d qa = _mm256_cvtps_pd(_mm_loadu_ps(q + d));
      const __m256d ra = _mm256_cvtps_pd(_mm_loadu_ps(row + d));
      const __m256d diff = _mm256_sub_pd(qa, ra);
      acc = _mm256_fmadd_pd(diff, diff, acc);
    }
    double s = hsum(acc);
    for (std::size_t d = d_main; d < dim; ++d) {
      const double diff = static_cast<double>(q[d]) - static_cast<double>(row[d]);
      s += diff * diff;
    }
    out[r] = s;
  }
}

template <class V>
void rmsprop_simd(typename V::T* p, const typename V::T* g, typename V::T* v, std::size_t n,
                  typename V::T lr, typename V::T decay, typename V::T eps) {
  using T = typename V::T;
  const auto vdecay = V::set1(decay);
  const auto vrest = V::set1(T(1) - decay);
  const auto vlr = V::set1(lr);
  const auto veps = V::set1(eps);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto gi = V::load(g + i);
    const auto vi = V::add(V::mul(vdecay, V::load(v + i)), V::mul(vrest, V::mul(gi, gi)));
    V::store(v + i, vi);
    const auto step = V::div(V::mul(vlr, gi), V::add(V::sqrt(vi), veps));
    V::store(p + i, V::sub(V::load(p + i), step));
  }
  for (; i < n; ++i) {
    v[i] = decay * v[i] + (T(1) - decay) * g[i] * g[i];
    p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
  }
}

void rmsprop_f32(float* p, const float* g, float* v, std::size_t n, float lr, float decay,
                 float eps) {
  rmsprop_simd<F32>(p, g, v, n, lr, decay, eps);
}

void rmsprop_f64(double* p, const double* g, double* v, std::size_t n, double lr, double decay,
                 double eps) {
  rmsprop_simd<F64>(p, g, v, n, lr, decay, eps);
}

constexpr KernelTable kAvx2{
    Isa::avx2, &gemm_f32, &gemm_f64, &fir_same, &sq_dist, &rmsprop_f32, &rmsprop_f64,
};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace memdecode::kernels
