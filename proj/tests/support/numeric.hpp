#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "phenoseq/rng.hpp"
#include "phenoseq/tensor.hpp"

namespace phenoseq::testing {

/// Central differences of `loss` with respect to every entry of `x` (restored afterwards).
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& loss, double h = 1e-6) {
    Tensor g = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = loss();
        x[i] = saved - h;
        const double down = loss();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||, 1e-12)
inline double relative_error(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "relative_error");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

inline Tensor uniform_tensor(RngStream& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Scalar probe sum_i w_i y_i used to reduce a tensor output to a loss.
inline double project(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

}  // namespace phenoseq::testing
