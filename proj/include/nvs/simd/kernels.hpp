#pragma once

// Dense arithmetic kernels behind the tensor engine.
//
// Every kernel has a portable scalar reference in nvs::simd::scalar and, on
// x86-64, an AVX2+FMA variant in nvs::simd::avx2. The dispatching entry points
// in nvs::simd pick a variant once per process (overridable with NVS_SIMD=scalar
// or set_active_isa) so a given machine always runs the same arithmetic.
//
// All matrices are row-major. Per output element the reduction order over k is
// fixed, so results do not depend on the thread count.

#include <cstdint>

namespace nvs::simd {

enum class Isa { kScalar, kAvx2 };

/// Best ISA supported by the running CPU.
Isa detected_isa();
/// ISA used by the dispatching kernels.
Isa active_isa();
/// Overrides dispatch; requests for an unsupported ISA fall back to scalar.
void set_active_isa(Isa isa);
const char* isa_name(Isa isa);

// C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc);

// y += alpha * x
template <typename T>
void axpy(std::int64_t n, T alpha, const T* x, T* y);

template <typename T>
void add(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void sub(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void mul(std::int64_t n, const T* a, const T* b, T* out);
// out = alpha * x
template <typename T>
void scale(std::int64_t n, T alpha, const T* x, T* out);

namespace scalar {
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc);
template <typename T>
void axpy(std::int64_t n, T alpha, const T* x, T* y);
template <typename T>
void add(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void sub(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void mul(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void scale(std::int64_t n, T alpha, const T* x, T* out);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define NVS_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc);
template <typename T>
void axpy(std::int64_t n, T alpha, const T* x, T* y);
template <typename T>
void add(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void sub(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void mul(std::int64_t n, const T* a, const T* b, T* out);
template <typename T>
void scale(std::int64_t n, T alpha, const T* x, T* out);
}  // namespace avx2
#else
#define NVS_HAVE_AVX2_KERNELS 0
#endif

}  // namespace nvs::simd
