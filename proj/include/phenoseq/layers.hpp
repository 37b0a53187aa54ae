#pragma once

#include <cstddef>
#include <vector>

#include "phenoseq/rng.hpp"
#include "phenoseq/tensor.hpp"

namespace phenoseq {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2-D cross-correlation with zero padding. kernels: [out_ch x in_ch x kh x kw].
struct Conv2dLayer {
    Tensor kernels;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static Conv2dLayer glorot(RngStream& rng, std::size_t in_channels, std::size_t out_channels,
                              std::size_t kernel_size, std::size_t stride = 1, std::size_t padding = 0);

    std::size_t out_channels() const { return kernels.dim(0); }
    std::size_t in_channels() const { return kernels.dim(1); }
    std::size_t kernel_h() const { return kernels.dim(2); }
    std::size_t kernel_w() const { return kernels.dim(3); }
    /// Output shape for an input of shape [in_ch x h x w]; throws if it would be empty.
    Shape output_shape(const Shape& input) const;
};

struct Conv2dCache {
    Tensor input;
    Shape kernel_shape;
    Shape output_shape;
};

struct Conv2dForward {
    Tensor output;
    Conv2dCache cache;
};

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

Conv2dForward conv2d_forward(const Conv2dLayer& layer, const Tensor& x);
Conv2dGrads conv2d_backward(const Conv2dLayer& layer, const Conv2dCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

struct MaxPoolCache {
    Shape input_shape;
    Shape output_shape;
    /// Flat input index that produced each output element.
    std::vector<std::size_t> argmax;
};

struct MaxPoolForward {
    Tensor output;
    MaxPoolCache cache;
};

/// Per-window maximum over [ch x h x w]. Ties resolve to the first element in row-major scan order.
MaxPoolForward maxpool2d(const Tensor& x, std::size_t window, std::size_t stride);
Tensor maxpool2d_backward(const MaxPoolCache& cache, const Tensor& grad_out);

/// [ch x h x w] -> [ch], per-channel mean.
Tensor global_average_pool(const Tensor& x);
Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// y = W x + b with W: [out x in].
struct DenseLayer {
    Tensor weights;
    Tensor bias;

    static DenseLayer glorot(RngStream& rng, std::size_t in, std::size_t out);
    std::size_t in_features() const { return weights.dim(1); }
    std::size_t out_features() const { return weights.dim(0); }
};

struct DenseCache {
    Tensor input;
};

struct DenseForward {
    Tensor output;
    DenseCache cache;
};

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

DenseForward dense_forward(const DenseLayer& layer, const Tensor& x);
DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

double sigmoid_scalar(double x);

Tensor relu(const Tensor& x);
/// Derivative taken as 0 at x == 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

Tensor tanh(const Tensor& x);
Tensor tanh_backward(const Tensor& output, const Tensor& grad_out);

/// exp(z_i - max z) / sum_j exp(z_j - max z).
Tensor softmax(const Tensor& logits);

}  // namespace phenoseq
