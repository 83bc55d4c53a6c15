#include <atomic>
#include <cstdlib>
#include <cstring>

#include "nvs/simd/kernels.hpp"

namespace nvs::simd {
namespace {

Isa initial_isa() {
  const char* env = std::getenv("NVS_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return detected_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa detected_isa() {
#if NVS_HAVE_AVX2_KERNELS
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) isa = Isa::kScalar;
  active().store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

#if NVS_HAVE_AVX2_KERNELS
#define NVS_DISPATCH(call) \
  if (active_isa() == Isa::kAvx2) return avx2::call; \
  return scalar::call
#else
#define NVS_DISPATCH(call) return scalar::call
#endif

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc) {
  NVS_DISPATCH(gemm<T>(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc));
}

template <typename T>
void axpy(std::int64_t n, T alpha, const T* x, T* y) {
  NVS_DISPATCH(axpy<T>(n, alpha, x, y));
}

template <typename T>
void add(std::int64_t n, const T* a, const T* b, T* out) {
  NVS_DISPATCH(add<T>(n, a, b, out));
}

template <typename T>
void sub(std::int64_t n, const T* a, const T* b, T* out) {
  NVS_DISPATCH(sub<T>(n, a, b, out));
}

template <typename T>
void mul(std::int64_t n, const T* a, const T* b, T* out) {
  NVS_DISPATCH(mul<T>(n, a, b, out));
}

template <typename T>
void scale(std::int64_t n, T alpha, const T* x, T* out) {
  NVS_DISPATCH(scale<T>(n, alpha, x, out));
}

#undef NVS_DISPATCH

#define NVS_INSTANTIATE(T)                                                                    \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, T, const T*,   \
                        std::int64_t, const T*, std::int64_t, T, T*, std::int64_t);          \
  template void axpy<T>(std::int64_t, T, const T*, T*);                                      \
  template void add<T>(std::int64_t, const T*, const T*, T*);                                \
  template void sub<T>(std::int64_t, const T*, const T*, T*);                                \
  template void mul<T>(std::int64_t, const T*, const T*, T*);                                \
  template void scale<T>(std::int64_t, T, const T*, T*);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)
#undef NVS_INSTANTIATE

}  // namespace nvs::simd
