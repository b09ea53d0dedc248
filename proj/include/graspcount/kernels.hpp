#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Inner-loop arithmetic for the neural substrate. Every routine has a scalar
// reference implementation; vectorized variants (AVX2+FMA on x86-64, NEON on
// AArch64) are picked once at startup from the running CPU and must agree
// with the reference to rounding.

namespace graspcount::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
    Isa isa;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The table used by dot()/axpy(). Defaults to the widest supported ISA;
/// the GRASPCOUNT_SIMD environment variable (scalar|avx2|neon) overrides it.
const KernelTable& active();

/// Switches the active table; returns false when `isa` is unavailable.
bool select(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
#if defined(__x86_64__) || defined(_M_X64)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif
#if defined(__aarch64__)
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
#endif
}  // namespace detail

}  // namespace graspcount::kernels
