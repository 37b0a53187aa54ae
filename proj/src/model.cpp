#include "phenoseq/model.hpp"

#include <algorithm>
#include <cmath>

#include "phenoseq/data.hpp"

namespace phenoseq {

void FeatureExtractorConfig::validate() const {
    if (channels.empty()) throw ValidationError("extractor needs at least one conv block");
    if (kernel_size == 0 || kernel_size % 2 == 0) throw ValidationError("extractor kernel size must be odd");
    if (pool == 0) throw ValidationError("extractor pool must be >= 1");
    if (input_channels == 0) throw ValidationError("extractor input channels must be >= 1");
    for (std::size_t c : channels) {
        if (c == 0) throw ValidationError("extractor channel counts must be >= 1");
    }
}

void ModelConfig::validate() const {
    extractor.validate();
    if (image_size == 0 || hidden_units == 0 || lstm_hidden == 0) {
        throw ValidationError("model sizes must be positive");
    }
    if (classes != kNumClasses) throw ValidationError("model must have exactly 3 output classes");
}

namespace {

void accumulate(GradientMap& grads, const std::string& name, const Tensor& g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, g);
    } else {
        add_scaled_inplace(it->second, g);
    }
}

std::string block_name(const std::string& prefix, std::size_t i) { return prefix + ".block" + std::to_string(i); }

}  // namespace

// ---------------------------------------------------------------------------
// FeatureExtractor
// ---------------------------------------------------------------------------

FeatureExtractor FeatureExtractor::init(const FeatureExtractorConfig& config, RngStream& rng) {
    config.validate();
    FeatureExtractor fx;
    fx.config_ = config;
    std::size_t in = config.input_channels;
    for (std::size_t out : config.channels) {
        fx.blocks_.push_back(
            {Conv2dLayer::glorot(rng, in, out, config.kernel_size, 1, config.kernel_size / 2), config.pool});
        in = out;
    }
    return fx;
}

ExtractorPass FeatureExtractor::forward(const Tensor& image) const {
    ExtractorPass pass;
    pass.blocks.reserve(blocks_.size());
    Tensor x = image;
    for (const ConvBlock& block : blocks_) {
        ExtractorPass::Block cache;
        Conv2dForward conv = conv2d_forward(block.conv, x);
        cache.conv = std::move(conv.cache);
        cache.activation = relu(conv.output);
        cache.pre_activation = std::move(conv.output);
        if (block.pool > 1) {
            MaxPoolForward pooled = maxpool2d(cache.activation, block.pool, block.pool);
            x = std::move(pooled.output);
            cache.pool = std::move(pooled.cache);
        } else {
            x = cache.activation;
        }
        pass.blocks.push_back(std::move(cache));
    }
    pass.pooled_shape = x.shape();
    pass.features = global_average_pool(x);
    return pass;
}

Tensor FeatureExtractor::extract(const Tensor& image) const {
    Tensor x = image;
    for (const ConvBlock& block : blocks_) {
        x = relu(conv2d_forward(block.conv, x).output);
        if (block.pool > 1) x = maxpool2d(x, block.pool, block.pool).output;
    }
    return global_average_pool(x);
}

void FeatureExtractor::backward(const ExtractorPass& pass, const Tensor& grad_features, GradientMap& grads,
                                const std::string& prefix) const {
    if (pass.blocks.size() != blocks_.size()) throw ShapeError("extractor backward: pass has wrong block count");
    Tensor grad = global_average_pool_backward(pass.pooled_shape, grad_features);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        const ExtractorPass::Block& cache = pass.blocks[i];
        if (cache.pool) grad = maxpool2d_backward(*cache.pool, grad);
        grad = relu_backward(cache.pre_activation, grad);
        Conv2dGrads g = conv2d_backward(blocks_[i].conv, cache.conv, grad);
        accumulate(grads, block_name(prefix, i) + ".kernels", g.kernels);
        accumulate(grads, block_name(prefix, i) + ".bias", g.bias);
        grad = std::move(g.input);
    }
}

Tensor FeatureExtractor::features_from_last_activation(const Tensor& activation) const {
    const std::size_t pool = blocks_.back().pool;
    if (pool > 1) return global_average_pool(maxpool2d(activation, pool, pool).output);
    return global_average_pool(activation);
}

Tensor FeatureExtractor::last_activation_gradient(const Tensor& activation, const Tensor& grad_features) const {
    const std::size_t pool = blocks_.back().pool;
    if (pool > 1) {
        MaxPoolForward pooled = maxpool2d(activation, pool, pool);
        return maxpool2d_backward(pooled.cache, global_average_pool_backward(pooled.output.shape(), grad_features));
    }
    return global_average_pool_backward(activation.shape(), grad_features);
}

void FeatureExtractor::append_parameters(ParameterList& out, const std::string& prefix) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        out.emplace_back(block_name(prefix, i) + ".kernels", &blocks_[i].conv.kernels);
        out.emplace_back(block_name(prefix, i) + ".bias", &blocks_[i].conv.bias);
    }
}

// ---------------------------------------------------------------------------
// FeatureNorm
// ---------------------------------------------------------------------------

FeatureNorm FeatureNorm::identity(std::size_t dim) { return {Tensor::zeros({dim}), Tensor({dim}, 1.0)}; }

FeatureNorm FeatureNorm::fit(std::span<const Tensor> features) {
    if (features.empty()) throw ValidationError("FeatureNorm::fit: no samples");
    const std::size_t d = features[0].size();
    Tensor mean = Tensor::zeros({d});
    for (const Tensor& f : features) add_scaled_inplace(mean, f.reshaped({d}));
    const double n = static_cast<double>(features.size());
    for (double& v : mean.values()) v /= n;
    Tensor var = Tensor::zeros({d});
    for (const Tensor& f : features) {
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = f[i] - mean[i];
            var[i] += diff * diff;
        }
    }
    Tensor scale({d});
    for (std::size_t i = 0; i < d; ++i) scale[i] = 1.0 / std::max(std::sqrt(var[i] / n), 1e-6);
    return {std::move(mean), std::move(scale)};
}

Tensor FeatureNorm::apply(const Tensor& features) const {
    require_same_shape(features, shift, "FeatureNorm::apply");
    Tensor out = features;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - shift[i]) * scale[i];
    return out;
}

Tensor FeatureNorm::backward(const Tensor& grad) const { return hadamard(grad, scale); }

// ---------------------------------------------------------------------------
// ClassificationHead
// ---------------------------------------------------------------------------

ClassificationHead ClassificationHead::init(RngStream& rng, std::size_t in, std::size_t hidden_units,
                                            std::size_t classes) {
    ClassificationHead head;
    head.hidden = DenseLayer::glorot(rng, in, hidden_units);
    head.output = DenseLayer::glorot(rng, hidden_units, classes);
    return head;
}

HeadPass ClassificationHead::forward(const Tensor& x) const {
    HeadPass pass;
    DenseForward h = dense_forward(hidden, x);
    pass.hidden_cache = std::move(h.cache);
    pass.hidden_act = relu(h.output);
    pass.hidden_pre = std::move(h.output);
    DenseForward o = dense_forward(output, pass.hidden_act);
    pass.output_cache = std::move(o.cache);
    pass.logits = std::move(o.output);
    pass.probabilities = softmax(pass.logits);
    return pass;
}

Tensor ClassificationHead::backward(const HeadPass& pass, const Tensor& grad_logits, GradientMap& grads,
                                    const std::string& prefix) const {
    DenseGrads go = dense_backward(output, pass.output_cache, grad_logits);
    accumulate(grads, prefix + ".output.weights", go.weights);
    accumulate(grads, prefix + ".output.bias", go.bias);
    DenseGrads gh = dense_backward(hidden, pass.hidden_cache, relu_backward(pass.hidden_pre, go.input));
    accumulate(grads, prefix + ".hidden.weights", gh.weights);
    accumulate(grads, prefix + ".hidden.bias", gh.bias);
    return std::move(gh.input);
}

void ClassificationHead::append_parameters(ParameterList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".hidden.weights", &hidden.weights);
    out.emplace_back(prefix + ".hidden.bias", &hidden.bias);
    out.emplace_back(prefix + ".output.weights", &output.weights);
    out.emplace_back(prefix + ".output.bias", &output.bias);
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

CnnClassifier CnnClassifier::init(const ModelConfig& config, RngStream& extractor_rng, RngStream& head_rng) {
    config.validate();
    CnnClassifier m;
    m.config = config;
    m.extractor = FeatureExtractor::init(config.extractor, extractor_rng);
    m.norm = FeatureNorm::identity(config.extractor.feature_dim());
    RngStream rng = head_rng.substream("head");
    m.head = ClassificationHead::init(rng, config.extractor.feature_dim(), config.hidden_units, config.classes);
    return m;
}

ParameterList CnnClassifier::parameters(bool include_extractor) {
    ParameterList out;
    if (include_extractor) extractor.append_parameters(out, "extractor");
    head.append_parameters(out, "head");
    return out;
}

namespace {

std::string lstm_name(const char* kind, std::size_t g) {
    return std::string("lstm.") + kind + "." + std::string(gate_name(kGates[g]));
}

}  // namespace

CnnLstmModel CnnLstmModel::init(const ModelConfig& config, RngStream& extractor_rng, RngStream& head_rng) {
    config.validate();
    CnnLstmModel m;
    m.config = config;
    m.extractor = FeatureExtractor::init(config.extractor, extractor_rng);
    m.norm = FeatureNorm::identity(config.extractor.feature_dim());
    RngStream lstm_rng = head_rng.substream("lstm");
    m.lstm = LstmCellParams::glorot(lstm_rng, config.extractor.feature_dim(), config.lstm_hidden);
    RngStream rng = head_rng.substream("head");
    m.head = ClassificationHead::init(rng, config.lstm_hidden, config.hidden_units, config.classes);
    return m;
}

ParameterList CnnLstmModel::parameters(bool include_extractor) {
    ParameterList out;
    if (include_extractor) extractor.append_parameters(out, "extractor");
    for (std::size_t g = 0; g < kGateCount; ++g) {
        out.emplace_back(lstm_name("input_weights", g), &lstm.input_weights[g]);
        out.emplace_back(lstm_name("recurrent_weights", g), &lstm.recurrent_weights[g]);
        out.emplace_back(lstm_name("bias", g), &lstm.bias[g]);
    }
    head.append_parameters(out, "head");
    return out;
}

Tensor one_hot(StressClass c) {
    Tensor y = Tensor::zeros({kNumClasses});
    y[class_index(c)] = 1.0;
    return y;
}

namespace {

void require_image(const ModelConfig& config, const Tensor& image) {
    const Shape expected{config.extractor.input_channels, config.image_size, config.image_size};
    if (image.shape() != expected) {
        throw ShapeError("model input " + shape_to_string(image.shape()) + " expected " + shape_to_string(expected));
    }
}

void require_frames(const ModelConfig& config, std::span<const Tensor> frames) {
    if (frames.empty()) throw ValidationError("cnn-lstm: empty frame sequence");
    if (frames.size() > static_cast<std::size_t>(kMaxSessions)) {
        throw ValidationError("cnn-lstm: sequence length " + std::to_string(frames.size()) + " exceeds 32");
    }
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (!frames[t].same_shape(frames[0])) {
            throw ShapeError("cnn-lstm: frame " + std::to_string(t) + " shape " + shape_to_string(frames[t].shape()) +
                             " differs from " + shape_to_string(frames[0].shape()));
        }
    }
    require_image(config, frames[0]);
}

std::vector<Tensor> normalized(const FeatureNorm& norm, std::span<const Tensor> features) {
    std::vector<Tensor> xs;
    xs.reserve(features.size());
    for (const Tensor& f : features) xs.push_back(norm.apply(f));
    return xs;
}

}  // namespace

Tensor classifier_logits_from_features(const CnnClassifier& model, const Tensor& features) {
    return model.head.forward(model.norm.apply(features)).logits;
}

Tensor cnn_lstm_logits_from_features(const CnnLstmModel& model, std::span<const Tensor> features) {
    if (features.empty()) throw ValidationError("cnn-lstm: empty feature sequence");
    const std::vector<Tensor> xs = normalized(model.norm, features);
    return model.head.forward(lstm_forward(model.lstm, xs).h_final).logits;
}

Tensor cnn_forward(const CnnClassifier& model, const Tensor& image) {
    require_image(model.config, image);
    return softmax(classifier_logits_from_features(model, model.extractor.extract(image)));
}

Tensor cnn_lstm_forward(const CnnLstmModel& model, std::span<const Tensor> frames) {
    require_frames(model.config, frames);
    std::vector<Tensor> features;
    features.reserve(frames.size());
    for (const Tensor& frame : frames) features.push_back(model.extractor.extract(frame));
    return softmax(cnn_lstm_logits_from_features(model, features));
}

double cross_entropy_loss(const Tensor& pred, const Tensor& true_onehot) {
    require_same_shape(pred, true_onehot, "cross_entropy_loss");
    std::size_t ones = 0;
    for (double y : true_onehot.values()) {
        if (y == 1.0) {
            ++ones;
        } else if (y != 0.0) {
            throw ValidationError("cross_entropy_loss: target is not one-hot");
        }
    }
    if (ones != 1) throw ValidationError("cross_entropy_loss: target is not one-hot");
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (true_onehot[i] != 0.0) loss -= true_onehot[i] * std::log(std::max(pred[i], 1e-12));
    }
    return loss;
}

Tensor softmax_cross_entropy_grad(const Tensor& probabilities, const Tensor& true_onehot) {
    return sub(probabilities, true_onehot);
}

LossGradients head_backward(const CnnLstmModel& model, std::span<const Tensor> features, const Tensor& true_onehot) {
    if (features.empty()) throw ValidationError("cnn-lstm: empty feature sequence");
    const std::vector<Tensor> xs = normalized(model.norm, features);
    LstmForward lf = lstm_forward(model.lstm, xs);
    HeadPass hp = model.head.forward(lf.h_final);
    LossGradients out;
    out.loss = cross_entropy_loss(hp.probabilities, true_onehot);
    const Tensor grad_h = model.head.backward(hp, softmax_cross_entropy_grad(hp.probabilities, true_onehot),
                                              out.gradients, "head");
    LstmGrads lg = lstm_backward(model.lstm, lf.trace, grad_h);
    for (std::size_t g = 0; g < kGateCount; ++g) {
        out.gradients[lstm_name("input_weights", g)] = std::move(lg.input_weights[g]);
        out.gradients[lstm_name("recurrent_weights", g)] = std::move(lg.recurrent_weights[g]);
        out.gradients[lstm_name("bias", g)] = std::move(lg.bias[g]);
    }
    out.probabilities = std::move(hp.probabilities);
    return out;
}

LossGradients head_backward(const CnnClassifier& model, const Tensor& features, const Tensor& true_onehot) {
    HeadPass hp = model.head.forward(model.norm.apply(features));
    LossGradients out;
    out.loss = cross_entropy_loss(hp.probabilities, true_onehot);
    model.head.backward(hp, softmax_cross_entropy_grad(hp.probabilities, true_onehot), out.gradients, "head");
    out.probabilities = std::move(hp.probabilities);
    return out;
}

LossGradients model_backward(const CnnLstmModel& model, std::span<const Tensor> frames, const Tensor& true_onehot,
                             bool freeze_extractor) {
    require_frames(model.config, frames);
    if (freeze_extractor) {
        std::vector<Tensor> features;
        for (const Tensor& frame : frames) features.push_back(model.extractor.extract(frame));
        return head_backward(model, features, true_onehot);
    }
    std::vector<ExtractorPass> passes;
    std::vector<Tensor> xs;
    passes.reserve(frames.size());
    for (const Tensor& frame : frames) {
        passes.push_back(model.extractor.forward(frame));
        xs.push_back(model.norm.apply(passes.back().features));
    }
    LstmForward lf = lstm_forward(model.lstm, xs);
    HeadPass hp = model.head.forward(lf.h_final);
    LossGradients out;
    out.loss = cross_entropy_loss(hp.probabilities, true_onehot);
    const Tensor grad_h = model.head.backward(hp, softmax_cross_entropy_grad(hp.probabilities, true_onehot),
                                              out.gradients, "head");
    LstmGrads lg = lstm_backward(model.lstm, lf.trace, grad_h);
    for (std::size_t g = 0; g < kGateCount; ++g) {
        out.gradients[lstm_name("input_weights", g)] = std::move(lg.input_weights[g]);
        out.gradients[lstm_name("recurrent_weights", g)] = std::move(lg.recurrent_weights[g]);
        out.gradients[lstm_name("bias", g)] = std::move(lg.bias[g]);
    }
    // The one extractor receives the sum of every timestep's contribution.
    for (std::size_t t = 0; t < passes.size(); ++t) {
        model.extractor.backward(passes[t], model.norm.backward(lg.inputs[t]), out.gradients, "extractor");
    }
    out.probabilities = std::move(hp.probabilities);
    return out;
}

LossGradients model_backward(const CnnClassifier& model, const Tensor& image, const Tensor& true_onehot,
                             bool freeze_extractor) {
    require_image(model.config, image);
    if (freeze_extractor) return head_backward(model, model.extractor.extract(image), true_onehot);
    ExtractorPass pass = model.extractor.forward(image);
    HeadPass hp = model.head.forward(model.norm.apply(pass.features));
    LossGradients out;
    out.loss = cross_entropy_loss(hp.probabilities, true_onehot);
    const Tensor grad_x = model.head.backward(hp, softmax_cross_entropy_grad(hp.probabilities, true_onehot),
                                              out.gradients, "head");
    model.extractor.backward(pass, model.norm.backward(grad_x), out.gradients, "extractor");
    out.probabilities = std::move(hp.probabilities);
    return out;
}

}  // namespace phenoseq
