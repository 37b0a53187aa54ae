#include "phenoseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phenoseq/simd/kernels.hpp"

namespace phenoseq {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_volume(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
    for (std::size_t extent : shape) {
        if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_volume(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape_));
    }
    return shape_[axis];
}

std::span<double> Tensor::slice(std::size_t i) {
    const std::size_t stride = data_.size() / shape_[0];
    return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::slice(std::size_t i) const {
    const std::size_t stride = data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_volume(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: shape mismatch " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    Tensor out({rows, cols});
    // i-k-j order: each output element accumulates its k terms left to right.
    for (std::size_t i = 0; i < rows; ++i) {
        std::span<double> out_row = out.slice(i);
        for (std::size_t k = 0; k < inner; ++k) {
            simd::axpy(a.at(i, k), b.slice(k), out_row);
        }
    }
    return out;
}

Tensor matvec(const Tensor& m, const Tensor& x) {
    if (m.rank() != 2 || x.rank() != 1 || m.dim(1) != x.dim(0)) {
        throw ShapeError("matvec: shape mismatch " + shape_to_string(m.shape()) + " x " +
                         shape_to_string(x.shape()));
    }
    Tensor out({m.dim(0)});
    for (std::size_t i = 0; i < m.dim(0); ++i) out[i] = simd::dot(m.slice(i), x.values());
    return out;
}

Tensor matvec_transposed(const Tensor& m, const Tensor& x) {
    if (m.rank() != 2 || x.rank() != 1 || m.dim(0) != x.dim(0)) {
        throw ShapeError("matvec_transposed: shape mismatch " + shape_to_string(m.shape()) + "^T x " +
                         shape_to_string(x.shape()));
    }
    Tensor out({m.dim(1)});
    for (std::size_t i = 0; i < m.dim(0); ++i) simd::axpy(x[i], m.slice(i), out.values());
    return out;
}

void add_outer(Tensor& acc, const Tensor& u, const Tensor& v) {
    if (acc.rank() != 2 || acc.dim(0) != u.size() || acc.dim(1) != v.size()) {
        throw ShapeError("add_outer: " + shape_to_string(acc.shape()) + " vs outer of " +
                         shape_to_string(u.shape()) + " and " + shape_to_string(v.shape()));
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] != 0.0) simd::axpy(u[i], v.values(), acc.slice(i));
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    simd::axpy(1.0, b.values(), out.values());
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    simd::axpy(-1.0, b.values(), out.values());
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scaled(const Tensor& a, double factor) {
    Tensor out = a;
    for (double& v : out.values()) v *= factor;
    return out;
}

void add_scaled_inplace(Tensor& a, const Tensor& b, double factor) {
    require_same_shape(a, b, "add_scaled_inplace");
    simd::axpy(factor, b.values(), a.values());
}

double sum(const Tensor& a) { return simd::sum(a.values()); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

std::size_t argmax(const Tensor& a) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] > a[best]) best = i;
    }
    return best;
}

}  // namespace phenoseq
