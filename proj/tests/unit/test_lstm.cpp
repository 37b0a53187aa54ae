#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "numeric.hpp"
#include "phenoseq/lstm.hpp"

using namespace phenoseq;
using namespace phenoseq::testing;

namespace {

LstmCellParams unit_cell() {
    LstmCellParams p = LstmCellParams::zeros(1, 1);
    for (Gate g : kGates) {
        p.input(g)[0] = 1.0;
        p.recurrent(g)[0] = 1.0;
    }
    return p;
}

// Loss sum_i probe_i h_T,i through the whole unrolled cell.
double unrolled_loss(const LstmCellParams& p, const std::vector<Tensor>& xs, const Tensor& probe) {
    return project(lstm_forward(p, xs).h_final, probe);
}

}  // namespace

TEST(Lstm, ScalarUnitCellMatchesReferenceValues) {
    // W = U = 1, b = 0, x_t = 1 from a zero state; values computed at 50 digits.
    const double gate[] = {0.7310585786300049, 0.7973165465183031, 0.8389633742475797};
    const double cand[] = {0.7615941559557649, 0.8786024501541461, 0.9289310301639620};
    const double cell[] = {0.5567699411459397, 1.144446157999103, 1.739487521869244};
    const double hidden[] = {0.3696063529357058, 0.6505352232008133, 0.7887658277404594};
    const LstmCellParams p = unit_cell();
    LstmState s = LstmState::zeros(1);
    for (int t = 0; t < 3; ++t) {
        const LstmStepResult r = lstm_step(p, Tensor::vector({1.0}), s);
        EXPECT_NEAR(r.cache.forget[0], gate[t], 1e-15);
        EXPECT_NEAR(r.cache.input[0], gate[t], 1e-15);
        EXPECT_NEAR(r.cache.output[0], gate[t], 1e-15);
        EXPECT_NEAR(r.cache.candidate[0], cand[t], 1e-15);
        EXPECT_NEAR(r.state.c[0], cell[t], 1e-14);
        EXPECT_NEAR(r.state.h[0], hidden[t], 1e-14);
        s = r.state;
    }
}

TEST(Lstm, GateOrderIsForgetInputOutputCandidate) {
    EXPECT_EQ(gate_name(Gate::Forget), "forget");
    EXPECT_EQ(static_cast<std::size_t>(Gate::Candidate), 3u);
}

TEST(Lstm, ForgetSaturationPreservesCellOver32Steps) {
    RngStream rng(1, 0);
    const std::size_t d = 4, h = 5;
    LstmCellParams p = LstmCellParams::zeros(d, h);
    for (double& v : p.gate_bias(Gate::Forget).values()) v = 1e6;   // f = 1
    for (double& v : p.gate_bias(Gate::Input).values()) v = -1e6;   // i = 0
    p.recurrent(Gate::Output) = uniform_tensor(rng, {h, h});
    LstmState s{uniform_tensor(rng, {h}), uniform_tensor(rng, {h}, -3, 3)};
    const Tensor c0 = s.c;
    for (int t = 0; t < 32; ++t) s = lstm_step(p, uniform_tensor(rng, {d}, -5, 5), s).state;
    for (std::size_t i = 0; i < h; ++i) EXPECT_NEAR(s.c[i], c0[i], 1e-12);
}

TEST(Lstm, ZeroRecurrentWeightsMakeStepsIndependentOfHistory) {
    RngStream rng(2, 0);
    LstmCellParams p = LstmCellParams::glorot(rng, 3, 4);
    for (Gate g : kGates) p.recurrent(g).fill(0.0);
    for (double& v : p.gate_bias(Gate::Forget).values()) v = -1e6;  // f = 0 drops the cell too
    const Tensor x = uniform_tensor(rng, {3});
    const Tensor a = lstm_step(p, x, LstmState::zeros(4)).state.h;
    const Tensor b = lstm_step(p, x, LstmState{uniform_tensor(rng, {4}), uniform_tensor(rng, {4})}).state.h;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Lstm, RejectsBadShapes) {
    LstmCellParams p = LstmCellParams::zeros(3, 2);
    EXPECT_THROW(lstm_step(p, Tensor::zeros({4}), LstmState::zeros(2)), ShapeError);
    p.recurrent(Gate::Input) = Tensor::zeros({2, 3});
    EXPECT_THROW(p.validate(), ShapeError);
    const std::vector<Tensor> none;
    EXPECT_ANY_THROW(lstm_forward(LstmCellParams::zeros(3, 2), none));
}

TEST(Lstm, GlorotInitHasForgetBiasOne) {
    RngStream rng(3, 0);
    const LstmCellParams p = LstmCellParams::glorot(rng, 6, 4);
    for (double v : p.gate_bias(Gate::Forget).values()) EXPECT_EQ(v, 1.0);
    for (double v : p.gate_bias(Gate::Input).values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, BackpropThroughTimeMatchesFiniteDifferences) {
    RngStream rng(4, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.below(4), h = 1 + rng.below(4), T = 1 + rng.below(6);
        LstmCellParams p = LstmCellParams::glorot(rng, d, h);
        for (Gate g : kGates) p.gate_bias(g) = uniform_tensor(rng, {h}, -0.5, 0.5);
        std::vector<Tensor> xs;
        for (std::size_t t = 0; t < T; ++t) xs.push_back(uniform_tensor(rng, {d}));
        const Tensor probe = uniform_tensor(rng, {h});
        const LstmForward fwd = lstm_forward(p, xs);
        const LstmGrads g = lstm_backward(p, fwd.trace, probe);
        auto loss = [&] { return unrolled_loss(p, xs, probe); };
        for (std::size_t k = 0; k < kGateCount; ++k) {
            EXPECT_LT(relative_error(g.input_weights[k], numeric_gradient(p.input_weights[k], loss)), 1e-5)
                << "trial " << trial << " gate " << k;
            EXPECT_LT(relative_error(g.recurrent_weights[k], numeric_gradient(p.recurrent_weights[k], loss)), 1e-5)
                << "trial " << trial << " gate " << k;
            EXPECT_LT(relative_error(g.bias[k], numeric_gradient(p.bias[k], loss)), 1e-5);
        }
        ASSERT_EQ(g.inputs.size(), T);
        for (std::size_t t = 0; t < T; ++t) {
            EXPECT_LT(relative_error(g.inputs[t], numeric_gradient(xs[t], loss)), 1e-5) << "t=" << t;
        }
    }
}

TEST(Lstm, LongSequenceGradientStaysFinite) {
    RngStream rng(5, 0);
    const LstmCellParams p = LstmCellParams::glorot(rng, 8, 8);
    std::vector<Tensor> xs;
    for (int t = 0; t < 32; ++t) xs.push_back(uniform_tensor(rng, {8}, -3, 3));
    const LstmForward fwd = lstm_forward(p, xs);
    const LstmGrads g = lstm_backward(p, fwd.trace, Tensor({8}, 1.0));
    for (const Tensor& t : g.input_weights) EXPECT_TRUE(t.all_finite());
    EXPECT_TRUE(g.inputs.front().all_finite());
}
