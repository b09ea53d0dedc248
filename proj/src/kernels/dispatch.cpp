#include <atomic>
#include <cstdlib>
#include <string>

#include "graspcount/kernels.hpp"

namespace graspcount::kernels {

namespace {

const KernelTable kScalar{Isa::scalar, &detail::dot_scalar, &detail::axpy_scalar};
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable kAvx2{Isa::avx2, &detail::dot_avx2, &detail::axpy_avx2};
#endif
#if defined(__aarch64__)
const KernelTable kNeon{Isa::neon, &detail::dot_neon, &detail::axpy_neon};
#endif

const KernelTable* detect() {
    if (const char* env = std::getenv("GRASPCOUNT_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return &kScalar;
        if (want == "avx2" && avx2_table()) return avx2_table();
        if (want == "neon" && neon_table()) return neon_table();
    }
    if (const auto* t = avx2_table()) return t;
    if (const auto* t = neon_table()) return t;
    return &kScalar;
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{detect()};
    return table;
}

}  // namespace

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
        default: return "scalar";
    }
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(__aarch64__)
    return &kNeon;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(Isa isa) {
    const KernelTable* t = nullptr;
    switch (isa) {
        case Isa::scalar: t = &kScalar; break;
        case Isa::avx2: t = avx2_table(); break;
        case Isa::neon: t = neon_table(); break;
    }
    if (!t) return false;
    current().store(t, std::memory_order_relaxed);
    return true;
}

}  // namespace graspcount::kernels
