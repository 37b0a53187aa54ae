#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phenoseq {

/// Raised when operand shapes are incompatible. The message names every shape involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for any other precondition violation on user-supplied values.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

/// Dense row-major tensor of 64-bit reals.
///
/// Extents are strictly positive and `size() == product(shape())` always holds.
/// Tensors are plain values: copies are deep and independent.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), 0.0); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    /// Row `i` of the leading axis as a contiguous view.
    std::span<double> slice(std::size_t i);
    std::span<const double> slice(std::size_t i) const;

    Tensor reshaped(Shape shape) const;
    void fill(double value);

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Throws ShapeError mentioning `what` when the two shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Matrix product with a fixed left-to-right accumulation order over the inner extent.
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = m * x for m[r x c], x[c].
Tensor matvec(const Tensor& m, const Tensor& x);

/// y = m^T * x for m[r x c], x[r].
Tensor matvec_transposed(const Tensor& m, const Tensor& x);

/// acc += outer(u, v) for acc[|u| x |v|].
void add_outer(Tensor& acc, const Tensor& u, const Tensor& v);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double factor);

/// a += factor * b
void add_scaled_inplace(Tensor& a, const Tensor& b, double factor = 1.0);

double sum(const Tensor& a);
double max_abs(const Tensor& a);
std::size_t argmax(const Tensor& a);

}  // namespace phenoseq
