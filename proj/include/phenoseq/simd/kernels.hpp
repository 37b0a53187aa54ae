#pragma once
// Inner-loop arithmetic kernels with runtime ISA dispatch.
//
// Every variant computes the same mathematical result. `axpy` is
// bit-identical across variants (no fused multiply-add). `dot` uses a fixed
// lane-split reduction per variant, so results are reproducible for a given
// variant but may differ from the scalar reference in the last few ulps.

#include <span>
#include <string_view>
#include <vector>

namespace phenoseq::simd {

using DotFn = double (*)(const double* a, const double* b, std::size_t n);
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);
using SumFn = double (*)(const double* a, std::size_t n);

struct KernelTable {
    std::string_view name;
    DotFn dot;
    AxpyFn axpy;
    SumFn sum;
};

// --- Implementations ---

const KernelTable& scalar_kernels();

#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels();
#endif

#if defined(__aarch64__)
const KernelTable& neon_kernels();
#endif

// --- Dispatch ---

/// Variants usable on this CPU, scalar first.
std::vector<const KernelTable*> available_kernels();

/// Kernel table in use. Picks the widest supported variant on first call;
/// setting PHENOSEQ_SIMD=scalar in the environment forces the reference path.
const KernelTable& active_kernels();

/// Overrides the active variant by name. Returns false if it is unavailable.
bool select_kernels(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline double sum(std::span<const double> a) {
    return active_kernels().sum(a.data(), a.size());
}

}  // namespace phenoseq::simd
