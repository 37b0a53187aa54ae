#include "phenoseq/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace phenoseq {

void AdamConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("adam: learning rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("adam: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ValidationError("adam: epsilon must be > 0");
}

void adam_step(AdamState& state, const ParameterList& params, const GradientMap& grads) {
    std::set<std::string> seen;
    for (const auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw ValidationError("adam: no gradient for parameter '" + name + "'");
        require_same_shape(*p, g->second, "adam_step");
        seen.insert(name);
    }
    for (const auto& [name, g] : grads) {
        if (!seen.contains(name)) throw ValidationError("adam: gradient '" + name + "' has no parameter");
    }

    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (const auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        auto [mi, m_new] = state.m.try_emplace(name, Tensor::zeros_like(*p));
        auto [vi, v_new] = state.v.try_emplace(name, Tensor::zeros_like(*p));
        Tensor& m = mi->second;
        Tensor& v = vi->second;
        require_same_shape(m, *p, "adam_step moments");
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double gi = g[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            (*p)[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("batch size must be >= 1");
    if (epochs == 0) throw ValidationError("epochs must be >= 1");
    adam.validate();
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng = RngStream(seed, hash_key("epoch_order")).substream(epoch);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

TrainResult train_loop(const ParameterList& params, std::size_t samples, const TrainConfig& config,
                       const SampleGradientFn& sample_gradients) {
    config.validate();
    if (samples == 0) throw ValidationError("training set is empty");
    AdamState adam(config.adam);
    TrainResult result;
    result.loss_history.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<std::size_t> order = epoch_order(config.seed, epoch, samples);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < samples; start += config.batch_size) {
            const std::size_t end = std::min(samples, start + config.batch_size);
            GradientMap batch;
            for (std::size_t b = start; b < end; ++b) {
                LossGradients lg = sample_gradients(order[b], epoch);
                if (!std::isfinite(lg.loss)) {
                    throw TrainingDiverged("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                           ", sample " + std::to_string(order[b]));
                }
                epoch_loss += lg.loss;
                if (b == start) {
                    batch = std::move(lg.gradients);
                } else {
                    for (auto& [name, g] : lg.gradients) add_scaled_inplace(batch.at(name), g);
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (auto& [name, g] : batch) {
                for (double& x : g.values()) x *= inv;
            }
            adam_step(adam, params, batch);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(samples));
    }
    result.adam_steps = adam.step;
    return result;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) out << (i + 1) << ',' << history[i] << '\n';
}

}  // namespace phenoseq
