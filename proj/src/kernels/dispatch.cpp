#include <atomic>
#include <cstdlib>
#include <string>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"

namespace ctrlsum::kernels {

#if defined(CTRLSUM_HAVE_AVX2)
const KernelTable& avx2_kernel_table();
#endif
#if defined(CTRLSUM_HAVE_NEON)
const KernelTable& neon_kernel_table();
#endif

const KernelTable* avx2_table() {
#if defined(CTRLSUM_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(CTRLSUM_HAVE_NEON)
  // Advanced SIMD is mandatory on aarch64.
  return &neon_kernel_table();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return &scalar_table();
    case Backend::Avx2: return avx2_table();
    case Backend::Neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("CTRLSUM_SIMD"); env != nullptr && *env != '\0') {
    const KernelTable* forced = table_for(parse_backend(env));
    if (forced == nullptr) throw Error(std::string("CTRLSUM_SIMD backend unavailable: ") + env);
    return forced;
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool backend_available(Backend backend) { return table_for(backend) != nullptr; }

Backend active_backend() { return active().backend; }

void set_backend(Backend backend) {
  const KernelTable* table = table_for(backend);
  if (table == nullptr) throw Error("kernel backend unavailable: " + std::string(backend_name(backend)));
  current().store(table, std::memory_order_release);
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::Scalar;
  if (name == "avx2") return Backend::Avx2;
  if (name == "neon") return Backend::Neon;
  throw Error("unknown kernel backend: " + std::string(name));
}

}  // namespace ctrlsum::kernels
