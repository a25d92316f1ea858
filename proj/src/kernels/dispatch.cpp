// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "memdecode/common.hpp"
#include "memdecode/kernels/kernels.hpp"

namespace memdecode::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool cpu_has_avx512() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return cpu_has_avx2() && __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512vl");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &scalar_table();
    case Isa::avx2: return cpu_has_avx2() ? avx2_table() : nullptr;
    case Isa::avx512: return cpu_has_avx512() ? avx512_table() : nullptr;
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("MEMDECODE_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
      if (want == isa_name(isa) && table_for(isa)) return table_for(isa);
    }
  }
  return table_for(best_supported());
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "unknown";
}

bool supported(Isa isa) { return table_for(isa) != nullptr; }

Isa best_supported() {
  if (supported(Isa::avx512)) return Isa::avx512;
  return supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void use(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (!t) throw Error("kernel variant not supported on this CPU: " + std::string(isa_name(isa)));
  current().store(t, std::memory_order_release);
}

IsaScope::IsaScope(Isa isa) : previous_(active().isa) { use(isa); }
IsaScope::~IsaScope() { use(previous_); }

}  // namespace memdecode::kernels
