#include <gtest/gtest.h>

#include <cmath>

#include "numeric.hpp"
#include "phenoseq/layers.hpp"

using namespace phenoseq;
using namespace phenoseq::testing;

namespace {

// Direct quadruple loop used as the convolution oracle.
Tensor brute_conv(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride, std::size_t pad) {
    const std::size_t oc = k.dim(0), ic = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const std::size_t h = x.dim(1), w = x.dim(2);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    Tensor y({oc, oh, ow});
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double s = b[o];
                for (std::size_t c = 0; c < ic; ++c)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v) {
                            const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                            const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                            if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                            s += k[((o * ic + c) * kh + u) * kw + v] * x.at(c, r, q);
                        }
                y.at(o, i, j) = s;
            }
    return y;
}

}  // namespace

TEST(Conv2d, MatchesBruteForceOracle) {
    RngStream rng(1, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t ic = 1 + rng.below(3), oc = 1 + rng.below(3), k = 1 + 2 * rng.below(2);
        const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
        const std::size_t h = k + rng.below(5), w = k + rng.below(5);
        Conv2dLayer layer = Conv2dLayer::glorot(rng, ic, oc, k, stride, pad);
        layer.bias = uniform_tensor(rng, {oc});
        const Tensor x = uniform_tensor(rng, {ic, h, w});
        const Tensor y = conv2d_forward(layer, x).output;
        const Tensor ref = brute_conv(x, layer.kernels, layer.bias, stride, pad);
        ASSERT_EQ(y.shape(), ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
}

TEST(Conv2d, RejectsChannelMismatchAndEmptyOutput) {
    RngStream rng(2, 0);
    const Conv2dLayer layer = Conv2dLayer::glorot(rng, 2, 3, 3);
    EXPECT_THROW(conv2d_forward(layer, Tensor::zeros({3, 5, 5})), ShapeError);
    EXPECT_THROW(conv2d_forward(layer, Tensor::zeros({2, 2, 2})), ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    RngStream rng(3, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
        Conv2dLayer layer = Conv2dLayer::glorot(rng, 2, 3, 3, stride, pad);
        layer.bias = uniform_tensor(rng, {3});
        Tensor x = uniform_tensor(rng, {2, 5, 6});
        const Conv2dForward fwd = conv2d_forward(layer, x);
        const Tensor probe = uniform_tensor(rng, fwd.output.shape());
        const Conv2dGrads g = conv2d_backward(layer, fwd.cache, probe);
        auto loss = [&] { return project(conv2d_forward(layer, x).output, probe); };
        EXPECT_LT(relative_error(g.input, numeric_gradient(x, loss)), 1e-5);
        EXPECT_LT(relative_error(g.kernels, numeric_gradient(layer.kernels, loss)), 1e-5);
        EXPECT_LT(relative_error(g.bias, numeric_gradient(layer.bias, loss)), 1e-5);
    }
}

TEST(Dense, ForwardIsAffine) {
    DenseLayer layer{Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), Tensor::vector({0.5, -0.5, 1})};
    const Tensor y = dense_forward(layer, Tensor::vector({1, -1})).output;
    EXPECT_EQ(y, Tensor::vector({-0.5, -1.5, 0}));
    EXPECT_THROW(dense_forward(layer, Tensor::vector({1, 2, 3})), ShapeError);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
    RngStream rng(4, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 1 + rng.below(8), out = 1 + rng.below(8);
        DenseLayer layer = DenseLayer::glorot(rng, in, out);
        layer.bias = uniform_tensor(rng, {out});
        Tensor x = uniform_tensor(rng, {in});
        const DenseForward fwd = dense_forward(layer, x);
        const Tensor probe = uniform_tensor(rng, {out});
        const DenseGrads g = dense_backward(layer, fwd.cache, probe);
        auto loss = [&] { return project(dense_forward(layer, x).output, probe); };
        EXPECT_LT(relative_error(g.input, numeric_gradient(x, loss)), 1e-5);
        EXPECT_LT(relative_error(g.weights, numeric_gradient(layer.weights, loss)), 1e-5);
        EXPECT_LT(relative_error(g.bias, numeric_gradient(layer.bias, loss)), 1e-5);
    }
}

TEST(MaxPool, SelectsWindowMaximum) {
    const Tensor x({1, 2, 4}, {1, 5, 2, 2, 3, 4, 7, 1});
    const MaxPoolForward f = maxpool2d(x, 2, 2);
    EXPECT_EQ(f.output, Tensor({1, 1, 2}, {5, 7}));
}

TEST(MaxPool, TiesRouteGradientToFirstElement) {
    const Tensor x({1, 2, 2}, {3, 3, 3, 3});
    const MaxPoolForward f = maxpool2d(x, 2, 2);
    const Tensor g = maxpool2d_backward(f.cache, Tensor({1, 1, 1}, {1.0}));
    EXPECT_EQ(g, Tensor({1, 2, 2}, {1, 0, 0, 0}));
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
    RngStream rng(5, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = uniform_tensor(rng, {2, 6, 6});
        const MaxPoolForward f = maxpool2d(x, 2, 2);
        const Tensor probe = uniform_tensor(rng, f.output.shape());
        const Tensor g = maxpool2d_backward(f.cache, probe);
        auto loss = [&] { return project(maxpool2d(x, 2, 2).output, probe); };
        EXPECT_LT(relative_error(g, numeric_gradient(x, loss)), 1e-5);
    }
}

TEST(GlobalAveragePool, MeanAndGradient) {
    RngStream rng(6, 0);
    Tensor x = uniform_tensor(rng, {3, 4, 5});
    const Tensor y = global_average_pool(x);
    double s = 0;
    for (std::size_t i = 0; i < 20; ++i) s += x[20 + i];
    EXPECT_NEAR(y[1], s / 20.0, 1e-15);
    const Tensor probe = uniform_tensor(rng, {3});
    const Tensor g = global_average_pool_backward(x.shape(), probe);
    EXPECT_LT(relative_error(g, numeric_gradient(x, [&] { return project(global_average_pool(x), probe); })), 1e-8);
}

TEST(Activations, ReluAndDerivativeAtZero) {
    const Tensor x = Tensor::vector({-1, 0, 2});
    EXPECT_EQ(relu(x), Tensor::vector({0, 0, 2}));
    EXPECT_EQ(relu_backward(x, Tensor::vector({1, 1, 1})), Tensor::vector({0, 0, 1}));
}

TEST(Activations, SigmoidAndTanhGradients) {
    RngStream rng(7, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = uniform_tensor(rng, {6}, -4, 4);
        const Tensor probe = uniform_tensor(rng, {6});
        const Tensor gs = sigmoid_backward(sigmoid(x), probe);
        const Tensor gt = tanh_backward(phenoseq::tanh(x), probe);
        EXPECT_LT(relative_error(gs, numeric_gradient(x, [&] { return project(sigmoid(x), probe); })), 1e-5);
        EXPECT_LT(relative_error(gt, numeric_gradient(x, [&] { return project(phenoseq::tanh(x), probe); })), 1e-5);
    }
    EXPECT_DOUBLE_EQ(sigmoid_scalar(0.0), 0.5);
    EXPECT_NEAR(sigmoid_scalar(-800.0), 0.0, 1e-300);
    EXPECT_DOUBLE_EQ(sigmoid_scalar(800.0), 1.0);
}

TEST(Softmax, KnownValues) {
    const Tensor p = softmax(Tensor::vector({1, 2, 3}));
    EXPECT_NEAR(p[0], 0.09003057317038046, 1e-15);
    EXPECT_NEAR(p[1], 0.24472847105479765, 1e-15);
    EXPECT_NEAR(p[2], 0.6652409557748219, 1e-15);
}

TEST(SoftmaxProperty, SumsToOneAndIsShiftInvariant) {
    RngStream rng(8, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        const Tensor z = uniform_tensor(rng, {n}, -50, 50);
        const Tensor p = softmax(z);
        EXPECT_NEAR(sum(p), 1.0, 1e-12);
        for (double v : p.values()) EXPECT_GE(v, 0.0);
        const double shift = rng.uniform(-1000, 1000);
        Tensor zs = z;
        for (double& v : zs.values()) v += shift;
        const Tensor ps = softmax(zs);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], ps[i], 1e-12);
    }
}

TEST(Softmax, ExtremeLogitsStayFinite) {
    const Tensor p = softmax(Tensor::vector({1000, -1000, 0}));
    EXPECT_TRUE(p.all_finite());
    EXPECT_NEAR(p[0], 1.0, 1e-15);
    EXPECT_THROW(softmax(Tensor::vector({1.0})), ShapeError);
}
