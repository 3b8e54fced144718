#include <atomic>
#include <cstdlib>
#include <string_view>

#include "gtsp/nn/kernels.hpp"

namespace gtsp::nn::kernels {

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
const KernelTable& table();
}
#endif

namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("GTSP_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
    return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2::table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void use(const KernelTable& table) { current().store(&table, std::memory_order_relaxed); }

}  // namespace gtsp::nn::kernels
