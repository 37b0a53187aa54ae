#include "phenoseq/lstm.hpp"

#include <cmath>

#include "phenoseq/layers.hpp"
#include "phenoseq/simd/kernels.hpp"

namespace phenoseq {

std::string_view gate_name(Gate gate) {
    switch (gate) {
        case Gate::Forget: return "forget";
        case Gate::Input: return "input";
        case Gate::Output: return "output";
        case Gate::Candidate: return "candidate";
    }
    return "?";
}

LstmCellParams LstmCellParams::zeros(std::size_t input_size, std::size_t hidden_size) {
    LstmCellParams p;
    for (std::size_t g = 0; g < kGateCount; ++g) {
        p.input_weights[g] = Tensor::zeros({hidden_size, input_size});
        p.recurrent_weights[g] = Tensor::zeros({hidden_size, hidden_size});
        p.bias[g] = Tensor::zeros({hidden_size});
    }
    return p;
}

LstmCellParams LstmCellParams::glorot(RngStream& rng, std::size_t input_size, std::size_t hidden_size) {
    LstmCellParams p = zeros(input_size, hidden_size);
    // Fans follow the fused [d x 4h] / [h x 4h] kernel layout.
    for (std::size_t g = 0; g < kGateCount; ++g) {
        p.input_weights[g] = glorot_uniform(rng, input_size, 4 * hidden_size, {hidden_size, input_size});
        p.recurrent_weights[g] = glorot_uniform(rng, hidden_size, 4 * hidden_size, {hidden_size, hidden_size});
    }
    p.gate_bias(Gate::Forget).fill(1.0);
    return p;
}

void LstmCellParams::validate() const {
    const Shape w_shape = input_weights[0].shape();
    if (w_shape.size() != 2) throw ShapeError("lstm: input weights must be a matrix, got " + shape_to_string(w_shape));
    const std::size_t h = w_shape[0];
    for (std::size_t g = 0; g < kGateCount; ++g) {
        const std::string name(gate_name(kGates[g]));
        if (input_weights[g].shape() != w_shape) {
            throw ShapeError("lstm: " + name + " input weights " + shape_to_string(input_weights[g].shape()) +
                             " vs " + shape_to_string(w_shape));
        }
        if (recurrent_weights[g].shape() != Shape{h, h}) {
            throw ShapeError("lstm: " + name + " recurrent weights " +
                             shape_to_string(recurrent_weights[g].shape()) + " expected " + shape_to_string({h, h}));
        }
        if (bias[g].shape() != Shape{h}) {
            throw ShapeError("lstm: " + name + " bias " + shape_to_string(bias[g].shape()) + " expected " +
                             shape_to_string({h}));
        }
    }
}

namespace {

Tensor preactivation(const LstmCellParams& p, Gate g, const Tensor& x, const Tensor& h_prev) {
    Tensor z = matvec(p.input(g), x);
    const Tensor& u = p.recurrent(g);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += simd::dot(u.slice(i), h_prev.values());
    simd::axpy(1.0, p.gate_bias(g).values(), z.values());
    return z;
}

}  // namespace

LstmStepResult lstm_step(const LstmCellParams& params, const Tensor& x, const LstmState& prev) {
    params.validate();
    const std::size_t d = params.input_size(), h = params.hidden_size();
    if (x.shape() != Shape{d}) {
        throw ShapeError("lstm_step: input " + shape_to_string(x.shape()) + " expected " + shape_to_string({d}));
    }
    if (prev.h.shape() != Shape{h} || prev.c.shape() != Shape{h}) {
        throw ShapeError("lstm_step: state " + shape_to_string(prev.h.shape()) + "/" + shape_to_string(prev.c.shape()) +
                         " expected " + shape_to_string({h}));
    }
    LstmStepCache cache;
    cache.x = x;
    cache.h_prev = prev.h;
    cache.c_prev = prev.c;
    cache.forget = sigmoid(preactivation(params, Gate::Forget, x, prev.h));
    cache.input = sigmoid(preactivation(params, Gate::Input, x, prev.h));
    cache.output = sigmoid(preactivation(params, Gate::Output, x, prev.h));
    cache.candidate = phenoseq::tanh(preactivation(params, Gate::Candidate, x, prev.h));
    cache.c = Tensor({h});
    for (std::size_t i = 0; i < h; ++i) {
        cache.c[i] = cache.forget[i] * prev.c[i] + cache.input[i] * cache.candidate[i];
    }
    cache.tanh_c = phenoseq::tanh(cache.c);
    cache.h = hadamard(cache.output, cache.tanh_c);
    LstmState state{cache.h, cache.c};
    return {std::move(state), std::move(cache)};
}

LstmForward lstm_forward(const LstmCellParams& params, std::span<const Tensor> xs) {
    if (xs.empty()) throw ValidationError("lstm_forward: empty input sequence");
    params.validate();
    LstmForward result;
    result.trace.input_size = params.input_size();
    result.trace.hidden_size = params.hidden_size();
    result.trace.steps.reserve(xs.size());
    LstmState state = LstmState::zeros(params.hidden_size());
    for (const Tensor& x : xs) {
        LstmStepResult step = lstm_step(params, x, state);
        state = std::move(step.state);
        result.trace.steps.push_back(std::move(step.cache));
    }
    result.h_final = std::move(state.h);
    return result;
}

LstmGrads lstm_backward(const LstmCellParams& params, const LstmTrace& trace, const Tensor& grad_h_final) {
    params.validate();
    const std::size_t d = params.input_size(), h = params.hidden_size();
    if (trace.steps.empty() || trace.input_size != d || trace.hidden_size != h) {
        throw ShapeError("lstm_backward: trace (d=" + std::to_string(trace.input_size) +
                         ", h=" + std::to_string(trace.hidden_size) + ", T=" + std::to_string(trace.steps.size()) +
                         ") does not match params (d=" + std::to_string(d) + ", h=" + std::to_string(h) + ")");
    }
    if (grad_h_final.shape() != Shape{h}) {
        throw ShapeError("lstm_backward: grad " + shape_to_string(grad_h_final.shape()) + " expected " +
                         shape_to_string({h}));
    }

    LstmGrads grads;
    for (std::size_t g = 0; g < kGateCount; ++g) {
        grads.input_weights[g] = Tensor::zeros({h, d});
        grads.recurrent_weights[g] = Tensor::zeros({h, h});
        grads.bias[g] = Tensor::zeros({h});
    }
    grads.inputs.assign(trace.steps.size(), Tensor::zeros({d}));

    Tensor dh = grad_h_final;
    Tensor dc = Tensor::zeros({h});
    std::array<Tensor, kGateCount> dz;
    for (std::size_t t = trace.steps.size(); t-- > 0;) {
        const LstmStepCache& s = trace.steps[t];
        for (auto& z : dz) z = Tensor::zeros({h});
        Tensor dc_prev({h});
        for (std::size_t i = 0; i < h; ++i) {
            const double d_out = dh[i] * s.tanh_c[i];
            const double dci = dc[i] + dh[i] * s.output[i] * (1.0 - s.tanh_c[i] * s.tanh_c[i]);
            const double d_forget = dci * s.c_prev[i];
            const double d_input = dci * s.candidate[i];
            const double d_cand = dci * s.input[i];
            dc_prev[i] = dci * s.forget[i];
            dz[0][i] = d_forget * s.forget[i] * (1.0 - s.forget[i]);
            dz[1][i] = d_input * s.input[i] * (1.0 - s.input[i]);
            dz[2][i] = d_out * s.output[i] * (1.0 - s.output[i]);
            dz[3][i] = d_cand * (1.0 - s.candidate[i] * s.candidate[i]);
        }
        Tensor dh_prev = Tensor::zeros({h});
        for (std::size_t g = 0; g < kGateCount; ++g) {
            add_outer(grads.input_weights[g], dz[g], s.x);
            add_outer(grads.recurrent_weights[g], dz[g], s.h_prev);
            simd::axpy(1.0, dz[g].values(), grads.bias[g].values());
            add_scaled_inplace(grads.inputs[t], matvec_transposed(params.input_weights[g], dz[g]));
            add_scaled_inplace(dh_prev, matvec_transposed(params.recurrent_weights[g], dz[g]));
        }
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    return grads;
}

}  // namespace phenoseq
