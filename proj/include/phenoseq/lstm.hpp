#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "phenoseq/rng.hpp"
#include "phenoseq/tensor.hpp"

namespace phenoseq {

enum class Gate : std::size_t { Forget = 0, Input = 1, Output = 2, Candidate = 3 };
inline constexpr std::size_t kGateCount = 4;
inline constexpr std::array<Gate, kGateCount> kGates{Gate::Forget, Gate::Input, Gate::Output, Gate::Candidate};
std::string_view gate_name(Gate gate);

/// Vanilla LSTM cell (no peepholes). Per gate: input weights [h x d],
/// recurrent weights [h x h], bias [h].
struct LstmCellParams {
    std::array<Tensor, kGateCount> input_weights;
    std::array<Tensor, kGateCount> recurrent_weights;
    std::array<Tensor, kGateCount> bias;

    static LstmCellParams zeros(std::size_t input_size, std::size_t hidden_size);
    /// Glorot-uniform input and recurrent weights, zero biases except a forget-gate bias of 1.
    static LstmCellParams glorot(RngStream& rng, std::size_t input_size, std::size_t hidden_size);

    Tensor& input(Gate g) { return input_weights[static_cast<std::size_t>(g)]; }
    const Tensor& input(Gate g) const { return input_weights[static_cast<std::size_t>(g)]; }
    Tensor& recurrent(Gate g) { return recurrent_weights[static_cast<std::size_t>(g)]; }
    const Tensor& recurrent(Gate g) const { return recurrent_weights[static_cast<std::size_t>(g)]; }
    Tensor& gate_bias(Gate g) { return bias[static_cast<std::size_t>(g)]; }
    const Tensor& gate_bias(Gate g) const { return bias[static_cast<std::size_t>(g)]; }

    std::size_t input_size() const { return input_weights[0].dim(1); }
    std::size_t hidden_size() const { return input_weights[0].dim(0); }
    /// Throws ShapeError unless all twelve tensors agree on (d, h).
    void validate() const;
};

struct LstmState {
    Tensor h;
    Tensor c;

    static LstmState zeros(std::size_t hidden_size) {
        return {Tensor::zeros({hidden_size}), Tensor::zeros({hidden_size})};
    }
};

/// Activations of one step kept for backpropagation through time.
struct LstmStepCache {
    Tensor x;
    Tensor h_prev;
    Tensor c_prev;
    Tensor forget;
    Tensor input;
    Tensor output;
    Tensor candidate;
    Tensor c;
    Tensor tanh_c;
    Tensor h;
};

struct LstmStepResult {
    LstmState state;
    LstmStepCache cache;
};

LstmStepResult lstm_step(const LstmCellParams& params, const Tensor& x, const LstmState& prev);

struct LstmTrace {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    std::vector<LstmStepCache> steps;
};

struct LstmForward {
    Tensor h_final;
    LstmTrace trace;
};

/// Unrolls the cell over `xs` from a zero state and returns the final hidden state.
LstmForward lstm_forward(const LstmCellParams& params, std::span<const Tensor> xs);

struct LstmGrads {
    std::array<Tensor, kGateCount> input_weights;
    std::array<Tensor, kGateCount> recurrent_weights;
    std::array<Tensor, kGateCount> bias;
    std::vector<Tensor> inputs;
};

/// Full backpropagation through time for a loss that depends on h_T only.
LstmGrads lstm_backward(const LstmCellParams& params, const LstmTrace& trace, const Tensor& grad_h_final);

}  // namespace phenoseq
