#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "phenoseq/model.hpp"

namespace phenoseq {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;

    void validate() const;
};

/// First and second moments keyed by parameter name.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;

    explicit AdamState(const AdamConfig& c = {}) : config(c) { config.validate(); }
};

/// One bias-corrected Adam update of every listed parameter. Each parameter
/// needs a gradient of the same shape; extra gradients are rejected too.
void adam_step(AdamState& state, const ParameterList& params, const GradientMap& grads);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 200;
    std::uint64_t seed = 42;
    bool freeze_extractor = true;
    AdamConfig adam;

    void validate() const;
};

/// Thrown when a training loss becomes NaN or infinite.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    std::vector<double> loss_history;  ///< mean training loss per epoch
    std::uint64_t adam_steps = 0;
};

/// Loss and gradients of one sample at a given epoch.
using SampleGradientFn = std::function<LossGradients(std::size_t sample, std::size_t epoch)>;

/// Minibatch loop: a seeded shuffle per epoch, the last partial batch kept,
/// gradients averaged over the batch in sample order.
TrainResult train_loop(const ParameterList& params, std::size_t samples, const TrainConfig& config,
                       const SampleGradientFn& sample_gradients);

/// Permutation of 0..n-1 used for an epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history);

}  // namespace phenoseq
