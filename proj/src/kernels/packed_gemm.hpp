// SPDX-License-Identifier: Apache-2.0
//
// Cache-blocked GEMM over packed panels, parameterized by a vector traits
// type. Included only by ISA-specific translation units, each of which
// compiles it with its own target flags.
#pragma once

#include <algorithm>
#include <vector>

#include "memdecode/kernels/kernels.hpp"

namespace memdecode::kernels::packed {

// V provides T, reg, width, zero, set1, load, store, fma, add.
// The register tile is MR rows by 2 * width columns.
template <class V, std::size_t MR>
struct Gemm {
  using T = typename V::T;
  static constexpr std::size_t NR = 2 * V::width;
  static constexpr std::size_t KC = 256;
  static constexpr std::size_t MC = MR * 8;
  static constexpr std::size_t NC = 1024;

  // a: kc x MR (column of MR values per p), b: kc x NR.
  static void kernel(std::size_t kc, const T* a, const T* b, T* c, std::size_t ldc, bool accumulate,
                     std::size_t mr, std::size_t nr) {
    typename V::reg c0[MR], c1[MR];
#pragma GCC unroll 16
    for (std::size_t r = 0; r < MR; ++r) {
      c0[r] = V::zero();
      c1[r] = V::zero();
    }
    for (std::size_t p = 0; p < kc; ++p) {
      const auto b0 = V::load(b);
      const auto b1 = V::load(b + V::width);
#pragma GCC unroll 16
      for (std::size_t r = 0; r < MR; ++r) {
        const auto av = V::set1(a[r]);
        c0[r] = V::fma(av, b0, c0[r]);
        c1[r] = V::fma(av, b1, c1[r]);
      }
      a += MR;
      b += NR;
    }
    if (mr == MR && nr == NR) {
#pragma GCC unroll 16
      for (std::size_t r = 0; r < MR; ++r) {
        T* row = c + r * ldc;
        if (accumulate) {
          V::store(row, V::add(V::load(row), c0[r]));
          V::store(row + V::width, V::add(V::load(row + V::width), c1[r]));
        } else {
          V::store(row, c0[r]);
          V::store(row + V::width, c1[r]);
        }
      }
      return;
    }
    alignas(64) T tile[MR * NR];
#pragma GCC unroll 16
    for (std::size_t r = 0; r < MR; ++r) {
      V::store(tile + r * NR, c0[r]);
      V::store(tile + r * NR + V::width, c1[r]);
    }
    for (std::size_t r = 0; r < mr; ++r) {
      for (std::size_t j = 0; j < nr; ++j) {
        c[r * ldc + j] = accumulate ? c[r * ldc + j] + tile[r * NR + j] : tile[r * NR + j];
      }
    }
  }

  static void pack_b(const GemmArgs<T>& g, std::size_t p0, std::size_t kc, std::size_t j0,
                     std::size_t nc, T* out) {
    for (std::size_t j = 0; j < nc; j += NR) {
      const std::size_t nr = std::min(NR, nc - j);
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = g.b + (p0 + p) * g.ldb + j0 + j;
        std::copy_n(src, nr, out);
        std::fill(out + nr, out + NR, T(0));
        out += NR;
      }
    }
  }

  static void pack_a(const GemmArgs<T>& g, std::size_t i0, std::size_t mc, std::size_t p0,
                     std::size_t kc, T* out) {
    for (std::size_t i = 0; i < mc; i += MR) {
      const std::size_t mr = std::min(MR, mc - i);
      const T* base = g.a + (i0 + i) * g.a_row_stride + p0 * g.a_col_stride;
      if (g.a_row_stride == 1) {
        for (std::size_t p = 0; p < kc; ++p) {
          const T* src = base + p * g.a_col_stride;
          std::copy_n(src, mr, out);
          std::fill(out + mr, out + MR, T(0));
          out += MR;
        }
      } else {
        for (std::size_t p = 0; p < kc; ++p) {
          const T* src = base + p * g.a_col_stride;
          for (std::size_t r = 0; r < mr; ++r) out[r] = src[r * g.a_row_stride];
          std::fill(out + mr, out + MR, T(0));
          out += MR;
        }
      }
    }
  }

  static void run(const GemmArgs<T>& g) {
    if (g.m == 0 || g.n == 0) return;
    if (g.k == 0) {
      if (!g.accumulate) {
        for (std::size_t i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, T(0));
      }
      return;
    }
    thread_local std::vector<T> bufa, bufb;
    bufa.resize(MC * KC);
    bufb.resize(KC * ((std::min(NC, g.n) + NR - 1) / NR * NR));
    for (std::size_t j0 = 0; j0 < g.n; j0 += NC) {
      const std::size_t nc = std::min(NC, g.n - j0);
      for (std::size_t p0 = 0; p0 < g.k; p0 += KC) {
        const std::size_t kc = std::min(KC, g.k - p0);
        const bool acc = g.accumulate || p0 > 0;
        pack_b(g, p0, kc, j0, nc, bufb.data());
        for (std::size_t i0 = 0; i0 < g.m; i0 += MC) {
          const std::size_t mc = std::min(MC, g.m - i0);
          pack_a(g, i0, mc, p0, kc, bufa.data());
          for (std::size_t j = 0; j < nc; j += NR) {
            const T* bp = bufb.data() + j * kc;
            const std::size_t nr = std::min(NR, nc - j);
            for (std::size_t i = 0; i < mc; i += MR) {
              kernel(kc, bufa.data() + i * kc, bp, g.c + (i0 + i) * g.ldc + j0 + j, g.ldc, acc,
                     std::min(MR, mc - i), nr);
            }
          }
        }
      }
    }
  }
};

}  // namespace memdecode::kernels::packed
