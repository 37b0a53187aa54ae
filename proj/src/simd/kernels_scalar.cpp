#include "phenoseq/simd/kernels.hpp"

namespace phenoseq::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{"scalar", &dot_scalar, &axpy_scalar, &sum_scalar};
    return table;
}

}  // namespace phenoseq::simd
