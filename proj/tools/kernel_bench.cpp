// SPDX-License-Identifier: Apache-2.0
//
// Throughput of the GEMM shapes used by the segment encoder.

#include <chrono>
#include <cstdio>
#include <vector>

#include "memdecode/kernels/kernels.hpp"
#include "memdecode/rng.hpp"

using namespace memdecode;

template <typename T>
double bench(std::size_t m, std::size_t n, std::size_t k, bool transposed, int reps) {
  Rng rng(1);
  std::vector<T> a(m * k + 64), b(k * n), c(m * n);
  for (auto& x : a) x = static_cast<T>(rng.uniform(-1, 1));
  for (auto& x : b) x = static_cast<T>(rng.uniform(-1, 1));
  kernels::GemmArgs<T> g;
  g.m = m; g.n = n; g.k = k; g.a = a.data(); g.b = b.data(); g.ldb = n; g.c = c.data(); g.ldc = n;
  if (transposed) { g.a_row_stride = 1; g.a_col_stride = m; } else { g.a_row_stride = k; g.a_col_stride = 1; }
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) kernels::gemm(g);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return 2.0 * m * n * k * reps / s * 1e-9;
}

int main() {
  for (auto isa : {kernels::Isa::avx2}) {
    kernels::use(isa);
    std::printf("%s f32 nn 100x256x768: %.1f GFLOP/s\n", kernels::isa_name(isa).data(), bench<float>(100, 256, 768, false, 200));
    std::printf("%s f32 nn 12x256x768: %.1f GFLOP/s\n", kernels::isa_name(isa).data(), bench<float>(12, 256, 768, false, 1000));
    std::printf("%s f32 tn 768x256x100: %.1f GFLOP/s\n", kernels::isa_name(isa).data(), bench<float>(768, 256, 100, true, 200));
    std::printf("%s f64 nn 100x256x768: %.1f GFLOP/s\n", kernels::isa_name(isa).data(), bench<double>(100, 256, 768, false, 100));
  }
}
