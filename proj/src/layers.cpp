#include "phenoseq/layers.hpp"

#include <algorithm>
#include <cmath>

#include "phenoseq/simd/kernels.hpp"

namespace phenoseq {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Conv2dLayer Conv2dLayer::glorot(RngStream& rng, std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel_size, std::size_t stride, std::size_t padding) {
    if (kernel_size == 0) throw ValidationError("conv kernel size must be >= 1");
    if (stride == 0) throw ValidationError("conv stride must be >= 1");
    const std::size_t receptive = kernel_size * kernel_size;
    Conv2dLayer layer;
    layer.kernels = glorot_uniform(rng, in_channels * receptive, out_channels * receptive,
                                   {out_channels, in_channels, kernel_size, kernel_size});
    layer.bias = Tensor::zeros({out_channels});
    layer.stride = stride;
    layer.padding = padding;
    return layer;
}

Shape Conv2dLayer::output_shape(const Shape& input) const {
    if (kernels.rank() != 4 || bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
        throw ShapeError("conv2d: malformed layer, kernels " + shape_to_string(kernels.shape()) + " bias " +
                         shape_to_string(bias.shape()));
    }
    if (stride == 0) throw ValidationError("conv2d: stride must be >= 1");
    if (input.size() != 3 || input[0] != in_channels()) {
        throw ShapeError("conv2d: input " + shape_to_string(input) + " incompatible with kernels " +
                         shape_to_string(kernels.shape()));
    }
    const std::size_t padded_h = input[1] + 2 * padding;
    const std::size_t padded_w = input[2] + 2 * padding;
    if (padded_h < kernel_h() || padded_w < kernel_w()) {
        throw ShapeError("conv2d: input " + shape_to_string(input) + " smaller than kernel " +
                         shape_to_string(kernels.shape()));
    }
    return {out_channels(), (padded_h - kernel_h()) / stride + 1, (padded_w - kernel_w()) / stride + 1};
}

namespace {

// Valid output-column range [lo, hi) for kernel column kx when stride == 1.
struct ColumnSpan {
    std::size_t lo;
    std::size_t hi;
};

ColumnSpan stride1_columns(std::size_t kx, std::size_t padding, std::size_t in_w, std::size_t out_w) {
    // input column = x + kx - padding must lie in [0, in_w).
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(padding);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w),
                                                       static_cast<std::ptrdiff_t>(in_w) - shift);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

bool input_index(std::size_t out_pos, std::size_t k, std::size_t stride, std::size_t padding,
                 std::size_t extent, std::size_t& in_pos) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(out_pos * stride + k) -
                               static_cast<std::ptrdiff_t>(padding);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
    in_pos = static_cast<std::size_t>(pos);
    return true;
}

}  // namespace

Conv2dForward conv2d_forward(const Conv2dLayer& layer, const Tensor& x) {
    const Shape out_shape = layer.output_shape(x.shape());
    const std::size_t out_ch = out_shape[0], out_h = out_shape[1], out_w = out_shape[2];
    const std::size_t in_ch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
    const std::size_t pad = layer.padding, stride = layer.stride;

    Tensor out(out_shape);
    const double* in = x.data();
    double* dst = out.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        std::fill_n(dst + o * out_h * out_w, out_h * out_w, layer.bias[o]);
        for (std::size_t c = 0; c < in_ch; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double w = layer.kernels.data()[((o * in_ch + c) * kh + ky) * kw + kx];
                    for (std::size_t y = 0; y < out_h; ++y) {
                        std::size_t iy;
                        if (!input_index(y, ky, stride, pad, in_h, iy)) continue;
                        double* out_row = dst + (o * out_h + y) * out_w;
                        const double* in_row = in + (c * in_h + iy) * in_w;
                        if (stride == 1) {
                            const ColumnSpan cols = stride1_columns(kx, pad, in_w, out_w);
                            if (cols.hi == cols.lo) continue;
                            simd::active_kernels().axpy(w, in_row + cols.lo + kx - pad, out_row + cols.lo,
                                                        cols.hi - cols.lo);
                        } else {
                            for (std::size_t xo = 0; xo < out_w; ++xo) {
                                std::size_t ix;
                                if (input_index(xo, kx, stride, pad, in_w, ix)) out_row[xo] += w * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return {std::move(out), Conv2dCache{x, layer.kernels.shape(), out_shape}};
}

Conv2dGrads conv2d_backward(const Conv2dLayer& layer, const Conv2dCache& cache, const Tensor& grad_out) {
    if (cache.kernel_shape != layer.kernels.shape() || cache.input.empty()) {
        throw ShapeError("conv2d_backward: cache was produced by a layer with kernels " +
                         shape_to_string(cache.kernel_shape) + ", got " + shape_to_string(layer.kernels.shape()));
    }
    if (grad_out.shape() != cache.output_shape) {
        throw ShapeError("conv2d_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match forward output " + shape_to_string(cache.output_shape));
    }
    const Tensor& x = cache.input;
    const std::size_t out_ch = grad_out.dim(0), out_h = grad_out.dim(1), out_w = grad_out.dim(2);
    const std::size_t in_ch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
    const std::size_t pad = layer.padding, stride = layer.stride;
    const auto& k = simd::active_kernels();

    Conv2dGrads grads{Tensor::zeros_like(x), Tensor::zeros_like(layer.kernels), Tensor::zeros_like(layer.bias)};
    const double* g = grad_out.data();
    const double* in = x.data();
    double* gin = grads.input.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        grads.bias[o] = k.sum(g + o * out_h * out_w, out_h * out_w);
        for (std::size_t c = 0; c < in_ch; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::size_t widx = ((o * in_ch + c) * kh + ky) * kw + kx;
                    const double w = layer.kernels.data()[widx];
                    double gw = 0.0;
                    for (std::size_t y = 0; y < out_h; ++y) {
                        std::size_t iy;
                        if (!input_index(y, ky, stride, pad, in_h, iy)) continue;
                        const double* g_row = g + (o * out_h + y) * out_w;
                        const double* in_row = in + (c * in_h + iy) * in_w;
                        double* gin_row = gin + (c * in_h + iy) * in_w;
                        if (stride == 1) {
                            const ColumnSpan cols = stride1_columns(kx, pad, in_w, out_w);
                            if (cols.hi == cols.lo) continue;
                            const std::size_t n = cols.hi - cols.lo;
                            const std::size_t ix0 = cols.lo + kx - pad;
                            gw += k.dot(g_row + cols.lo, in_row + ix0, n);
                            k.axpy(w, g_row + cols.lo, gin_row + ix0, n);
                        } else {
                            for (std::size_t xo = 0; xo < out_w; ++xo) {
                                std::size_t ix;
                                if (!input_index(xo, kx, stride, pad, in_w, ix)) continue;
                                gw += g_row[xo] * in_row[ix];
                                gin_row[ix] += w * g_row[xo];
                            }
                        }
                    }
                    grads.kernels.data()[widx] = gw;
                }
            }
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

MaxPoolForward maxpool2d(const Tensor& x, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw ValidationError("maxpool2d: window and stride must be >= 1");
    if (x.rank() != 3) throw ShapeError("maxpool2d: expected [ch x h x w], got " + shape_to_string(x.shape()));
    const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (window > h || window > w) {
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                         shape_to_string(x.shape()));
    }
    const std::size_t out_h = (h - window) / stride + 1;
    const std::size_t out_w = (w - window) / stride + 1;
    Tensor out({ch, out_h, out_w});
    MaxPoolCache cache{x.shape(), out.shape(), std::vector<std::size_t>(out.size())};
    std::size_t oi = 0;
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t xo = 0; xo < out_w; ++xo, ++oi) {
                std::size_t best = (c * h + y * stride) * w + xo * stride;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = (c * h + y * stride + dy) * w + xo * stride + dx;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                out[oi] = x[best];
                cache.argmax[oi] = best;
            }
        }
    }
    return {std::move(out), std::move(cache)};
}

Tensor maxpool2d_backward(const MaxPoolCache& cache, const Tensor& grad_out) {
    if (grad_out.shape() != cache.output_shape) {
        throw ShapeError("maxpool2d_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match forward output " + shape_to_string(cache.output_shape));
    }
    Tensor grad(cache.input_shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad[cache.argmax[i]] += grad_out[i];
    return grad;
}

Tensor global_average_pool(const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError("global_average_pool: expected [ch x h x w], got " + shape_to_string(x.shape()));
    }
    const std::size_t ch = x.dim(0);
    const double area = static_cast<double>(x.dim(1) * x.dim(2));
    Tensor out({ch});
    for (std::size_t c = 0; c < ch; ++c) out[c] = simd::sum(x.slice(c)) / area;
    return out;
}

Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
    if (input_shape.size() != 3 || grad_out.rank() != 1 || grad_out.dim(0) != input_shape[0]) {
        throw ShapeError("global_average_pool_backward: grad " + shape_to_string(grad_out.shape()) +
                         " vs input " + shape_to_string(input_shape));
    }
    Tensor grad(input_shape);
    const double area = static_cast<double>(input_shape[1] * input_shape[2]);
    for (std::size_t c = 0; c < input_shape[0]; ++c) {
        std::span<double> plane = grad.slice(c);
        std::fill(plane.begin(), plane.end(), grad_out[c] / area);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

DenseLayer DenseLayer::glorot(RngStream& rng, std::size_t in, std::size_t out) {
    return DenseLayer{glorot_uniform(rng, in, out, {out, in}), Tensor::zeros({out})};
}

DenseForward dense_forward(const DenseLayer& layer, const Tensor& x) {
    if (layer.bias.rank() != 1 || layer.bias.dim(0) != layer.weights.dim(0)) {
        throw ShapeError("dense: weights " + shape_to_string(layer.weights.shape()) + " inconsistent with bias " +
                         shape_to_string(layer.bias.shape()));
    }
    Tensor y = matvec(layer.weights, x);
    simd::axpy(1.0, layer.bias.values(), y.values());
    return {std::move(y), DenseCache{x}};
}

DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& grad_out) {
    if (grad_out.rank() != 1 || grad_out.dim(0) != layer.out_features()) {
        throw ShapeError("dense_backward: grad_out " + shape_to_string(grad_out.shape()) + " vs weights " +
                         shape_to_string(layer.weights.shape()));
    }
    if (cache.input.rank() != 1 || cache.input.dim(0) != layer.in_features()) {
        throw ShapeError("dense_backward: cached input " + shape_to_string(cache.input.shape()) + " vs weights " +
                         shape_to_string(layer.weights.shape()));
    }
    DenseGrads grads{matvec_transposed(layer.weights, grad_out), Tensor::zeros_like(layer.weights), grad_out};
    add_outer(grads.weights, grad_out, cache.input);
    return grads;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "relu_backward");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(input[i] > 0.0)) grad[i] = 0.0;
    }
    return grad;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = sigmoid_scalar(v);
    return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
    require_same_shape(output, grad_out, "sigmoid_backward");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= output[i] * (1.0 - output[i]);
    return grad;
}

Tensor tanh(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = std::tanh(v);
    return out;
}

Tensor tanh_backward(const Tensor& output, const Tensor& grad_out) {
    require_same_shape(output, grad_out, "tanh_backward");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - output[i] * output[i];
    return grad;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() < 2) {
        throw ShapeError("softmax: expected a vector with at least 2 entries, got " + shape_to_string(logits.shape()));
    }
    double peak = logits[0];
    for (double v : logits.values()) peak = std::max(peak, v);
    Tensor out = logits;
    double total = 0.0;
    for (double& v : out.values()) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : out.values()) v /= total;
    return out;
}

}  // namespace phenoseq
