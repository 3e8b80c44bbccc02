#include <atomic>
#include <cstdlib>

#include "bilevel/kernels.hpp"

namespace bilevel::kernels {

#if defined(BILEVEL_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(BILEVEL_HAVE_NEON)
const KernelTable& neon_table();
#endif

namespace {

bool host_supports(std::string_view name) {
  if (name == "scalar") return true;
#if defined(BILEVEL_HAVE_AVX2)
  if (name == "avx2") return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#endif
#if defined(BILEVEL_HAVE_NEON)
  if (name == "neon") return true;
#endif
  return false;
}

const KernelTable* table_by_name(std::string_view name) {
#if defined(BILEVEL_HAVE_AVX2)
  if (name == "avx2") return &avx2_table();
#endif
#if defined(BILEVEL_HAVE_NEON)
  if (name == "neon") return &neon_table();
#endif
  if (name == "scalar") return &scalar_table();
  return nullptr;
}

const KernelTable* pick_best() {
  if (const char* env = std::getenv("BILEVEL_KERNELS")) {
    if (host_supports(env))
      if (const KernelTable* t = table_by_name(env)) return t;
  }
#if defined(BILEVEL_HAVE_AVX2)
  if (host_supports("avx2")) return &avx2_table();
#endif
#if defined(BILEVEL_HAVE_NEON)
  return &neon_table();
#else
  return &scalar_table();
#endif
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = pick_best();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

bool force(std::string_view name) {
  if (!host_supports(name)) return false;
  const KernelTable* t = table_by_name(name);
  if (!t) return false;
  g_active.store(t, std::memory_order_release);
  return true;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> out;
#if defined(BILEVEL_HAVE_AVX2)
  if (host_supports("avx2")) out.push_back("avx2");
#endif
#if defined(BILEVEL_HAVE_NEON)
  out.push_back("neon");
#endif
  out.push_back("scalar");
  return out;
}

}  // namespace bilevel::kernels
