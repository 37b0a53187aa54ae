#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phenoseq/classes.hpp"
#include "phenoseq/layers.hpp"
#include "phenoseq/lstm.hpp"

namespace phenoseq {

using ParameterList = std::vector<std::pair<std::string, Tensor*>>;
using GradientMap = std::map<std::string, Tensor>;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Stack of [conv3x3 -> ReLU -> max-pool] blocks followed by global average pooling.
struct FeatureExtractorConfig {
    std::vector<std::size_t> channels{8, 16, 32, 64};
    std::size_t kernel_size = 3;
    std::size_t pool = 2;  ///< pooling window and stride; 1 disables pooling
    std::size_t input_channels = 3;

    std::size_t feature_dim() const { return channels.back(); }
    void validate() const;
    friend bool operator==(const FeatureExtractorConfig&, const FeatureExtractorConfig&) = default;
};

struct ModelConfig {
    FeatureExtractorConfig extractor;
    std::size_t image_size = 64;
    std::size_t hidden_units = 128;  ///< width of the hidden dense layer
    std::size_t lstm_hidden = 64;
    std::size_t classes = kNumClasses;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ---------------------------------------------------------------------------
// Feature extractor
// ---------------------------------------------------------------------------

struct ConvBlock {
    Conv2dLayer conv;
    std::size_t pool = 2;
};

struct ExtractorPass {
    struct Block {
        Conv2dCache conv;
        Tensor pre_activation;
        Tensor activation;
        std::optional<MaxPoolCache> pool;
    };
    std::vector<Block> blocks;
    Shape pooled_shape;  ///< shape entering global average pooling
    Tensor features;
};

class FeatureExtractor {
public:
    FeatureExtractor() = default;
    static FeatureExtractor init(const FeatureExtractorConfig& config, RngStream& rng);

    const FeatureExtractorConfig& config() const { return config_; }
    std::vector<ConvBlock>& blocks() { return blocks_; }
    const std::vector<ConvBlock>& blocks() const { return blocks_; }
    std::size_t feature_dim() const { return config_.feature_dim(); }

    Tensor extract(const Tensor& image) const;
    ExtractorPass forward(const Tensor& image) const;
    /// Accumulates kernel and bias gradients into `grads` under `prefix`.
    void backward(const ExtractorPass& pass, const Tensor& grad_features, GradientMap& grads,
                  const std::string& prefix) const;

    /// Pool (if any) and global-average-pool the last block's activation.
    Tensor features_from_last_activation(const Tensor& activation) const;
    /// Gradient of features_from_last_activation, given the activation it was evaluated at.
    Tensor last_activation_gradient(const Tensor& activation, const Tensor& grad_features) const;

    void append_parameters(ParameterList& out, const std::string& prefix);

private:
    FeatureExtractorConfig config_;
    std::vector<ConvBlock> blocks_;
};

/// Fixed per-dimension standardization of extracted features: (f - shift) * scale.
struct FeatureNorm {
    Tensor shift;
    Tensor scale;

    static FeatureNorm identity(std::size_t dim);
    /// Mean and inverse standard deviation (floored at 1e-6) over the given vectors.
    static FeatureNorm fit(std::span<const Tensor> features);
    Tensor apply(const Tensor& features) const;
    Tensor backward(const Tensor& grad) const;
};

// ---------------------------------------------------------------------------
// Classification block: dense(hidden) -> ReLU -> dense(classes) -> softmax
// ---------------------------------------------------------------------------

struct HeadPass {
    DenseCache hidden_cache;
    Tensor hidden_pre;
    Tensor hidden_act;
    DenseCache output_cache;
    Tensor logits;
    Tensor probabilities;
};

struct ClassificationHead {
    DenseLayer hidden;
    DenseLayer output;

    static ClassificationHead init(RngStream& rng, std::size_t in, std::size_t hidden_units, std::size_t classes);
    HeadPass forward(const Tensor& x) const;
    /// Returns the gradient w.r.t. the head input and accumulates parameter gradients.
    Tensor backward(const HeadPass& pass, const Tensor& grad_logits, GradientMap& grads, const std::string& prefix) const;
    void append_parameters(ParameterList& out, const std::string& prefix);
};

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Time-invariant classifier: extractor -> GAP -> head.
struct CnnClassifier {
    ModelConfig config;
    FeatureExtractor extractor;
    FeatureNorm norm;
    ClassificationHead head;

    /// Extractor weights come from `extractor_rng`, head weights from `head_rng`.
    static CnnClassifier init(const ModelConfig& config, RngStream& extractor_rng, RngStream& head_rng);
    ParameterList parameters(bool include_extractor = true);
};

/// Time-distributed extractor shared by every frame -> LSTM -> head on the final hidden state.
struct CnnLstmModel {
    ModelConfig config;
    FeatureExtractor extractor;
    FeatureNorm norm;
    LstmCellParams lstm;
    ClassificationHead head;

    static CnnLstmModel init(const ModelConfig& config, RngStream& extractor_rng, RngStream& head_rng);
    ParameterList parameters(bool include_extractor = true);
};

Tensor one_hot(StressClass c);

/// Class probabilities for one image.
Tensor cnn_forward(const CnnClassifier& model, const Tensor& image);
/// Class probabilities for an ordered frame sequence (1 <= T <= 32).
Tensor cnn_lstm_forward(const CnnLstmModel& model, std::span<const Tensor> frames);

/// Pre-softmax scores for cached (un-normalized) extractor features.
Tensor classifier_logits_from_features(const CnnClassifier& model, const Tensor& features);
Tensor cnn_lstm_logits_from_features(const CnnLstmModel& model, std::span<const Tensor> features);

/// -sum y_i log(max(p_i, 1e-12)); target must be one-hot.
double cross_entropy_loss(const Tensor& pred, const Tensor& true_onehot);
/// Gradient of cross-entropy(softmax(z)) w.r.t. z: p - y.
Tensor softmax_cross_entropy_grad(const Tensor& probabilities, const Tensor& true_onehot);

struct LossGradients {
    double loss = 0.0;
    Tensor probabilities;
    GradientMap gradients;
};

LossGradients model_backward(const CnnLstmModel& model, std::span<const Tensor> frames, const Tensor& true_onehot,
                             bool freeze_extractor);
LossGradients model_backward(const CnnClassifier& model, const Tensor& image, const Tensor& true_onehot,
                             bool freeze_extractor);

/// Head-only gradients from cached extractor features (extractor frozen).
LossGradients head_backward(const CnnLstmModel& model, std::span<const Tensor> features, const Tensor& true_onehot);
LossGradients head_backward(const CnnClassifier& model, const Tensor& features, const Tensor& true_onehot);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Self-describing JSON checkpoint; doubles round-trip bit-exactly.
struct Checkpoint {
    std::string kind;  ///< "cnn" or "cnn-lstm"
    ModelConfig config;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::map<std::string, Tensor> tensors;
};

Checkpoint make_checkpoint(const CnnClassifier& model, std::uint64_t seed, std::size_t epoch);
Checkpoint make_checkpoint(const CnnLstmModel& model, std::uint64_t seed, std::size_t epoch);
CnnClassifier classifier_from_checkpoint(const Checkpoint& checkpoint);
CnnLstmModel cnn_lstm_from_checkpoint(const Checkpoint& checkpoint);

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace phenoseq
