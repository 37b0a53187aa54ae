#include "phenoseq/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace phenoseq::simd {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* best_kernels() {
    if (const char* forced = std::getenv("PHENOSEQ_SIMD")) {
        for (const KernelTable* table : available_kernels()) {
            if (table->name == forced) return table;
        }
    }
    return available_kernels().back();
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{best_kernels()};
    return slot;
}

}  // namespace

std::vector<const KernelTable*> available_kernels() {
    std::vector<const KernelTable*> out{&scalar_kernels()};
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) out.push_back(&avx2_kernels());
#endif
#if defined(__aarch64__)
    out.push_back(&neon_kernels());
#endif
    return out;
}

const KernelTable& active_kernels() { return *active_slot().load(std::memory_order_relaxed); }

bool select_kernels(std::string_view name) {
    for (const KernelTable* table : available_kernels()) {
        if (table->name == name) {
            active_slot().store(table, std::memory_order_relaxed);
            return true;
        }
    }
    return false;
}

}  // namespace phenoseq::simd
