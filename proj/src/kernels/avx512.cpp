// SPDX-License-Identifier: Apache-2.0
//
// AVX-512 GEMM. Compiled with -mavx512f -mavx512vl -mfma; the remaining
// kernels are shared with the AVX2 table.

#include <immintrin.h>

#include "memdecode/kernels/kernels.hpp"
#include "packed_gemm.hpp"

namespace memdecode::kernels {
namespace {

struct F32 {
  using T = float;
  using reg = __m512;
  static constexpr std::size_t width = 16;
  static reg zero() { return _mm512_setzero_ps(); }
  static reg set1(T x) { return _mm512_set1_ps(x); }
  static reg load(const T* p) { return _mm512_loadu_ps(p); }
  static void store(T* p, reg v) { _mm512_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm512_add_ps(a, b); }
};

struct F64 {
  using T = double;
  using reg = __m512d;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm512_setzero_pd(); }
  static reg set1(T x) { return _mm512_set1_pd(x); }
  static reg load(const T* p) { return _mm512_loadu_pd(p); }
  static void store(T* p, reg v) { _mm512_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm512_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm512_add_pd(a, b); }
};

void gemm_f32(const GemmArgs<float>& g) { packed::Gemm<F32, 12>::run(g); }
void gemm_f64(const GemmArgs<double>& g) { packed::Gemm<F64, 12>::run(g); }

}  // namespace

const KernelTable* avx512_table() {
  static const KernelTable table = [] {
    KernelTable t = *avx2_table();
    t.isa = Isa::avx512;
    t.gemm_f32 = &gemm_f32;
    t.gemm_f64 = &gemm_f64;
    return t;
  }();
  return &table;
}

}  // namespace memdecode::kernels
