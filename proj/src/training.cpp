#include "phenoseq/training.hpp"

namespace phenoseq {

FeatureBank build_feature_bank(const FeatureExtractor& extractor, const std::vector<ImageSequence>& sequences,
                               const AugmentPolicy& policy, std::size_t augmented_variants, std::uint64_t seed) {
    policy.validate();
    FeatureBank bank;
    bank.features.resize(sequences.size());
    bank.labels = labels_of(sequences);
    const RngStream root(seed, hash_key("augment"));
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        auto& variants = bank.features[s];
        variants.resize(augmented_variants + 1);
        for (std::size_t v = 0; v <= augmented_variants; ++v) {
            const ImageSequence* source = &sequences[s];
            AugmentedSequence augmented;
            if (v > 0) {
                augmented = augment_sequence(sequences[s], policy, root.substream(s).substream(v));
                source = &augmented.sequence;
            }
            variants[v].reserve(source->length());
            for (const Tensor& frame : source->frames) variants[v].push_back(extractor.extract(frame));
        }
    }
    return bank;
}

FeatureBank truncate_bank(const FeatureBank& bank, const std::vector<ImageSequence>& sequences, int n) {
    if (sequences.size() != bank.sequences()) throw ValidationError("truncate_bank: sequence count differs from bank");
    FeatureBank out;
    out.labels = bank.labels;
    out.features.resize(bank.features.size());
    for (std::size_t s = 0; s < bank.features.size(); ++s) {
        const ImageSequence kept = truncate_sessions(sequences[s], n);
        if (kept.length() == 0) {
            throw ValidationError("sessions=" + std::to_string(n) + " leaves " + sequences[s].plant_id + " angle " +
                                  std::to_string(sequences[s].angle_index) + " without frames");
        }
        // Sessions are ascending, so the kept frames are a prefix.
        for (const auto& frames : bank.features[s]) {
            out.features[s].emplace_back(frames.begin(), frames.begin() + kept.length());
        }
    }
    return out;
}

std::size_t bank_variant(std::uint64_t seed, std::size_t epoch, std::size_t sample, std::size_t variants) {
    if (variants <= 1) return 0;
    RngStream rng = RngStream(seed, hash_key("bank_variant")).substream(epoch).substream(sample);
    return static_cast<std::size_t>(rng.below(variants));
}

FeatureNorm fit_norm_on_bank(const FeatureBank& bank, const std::vector<std::size_t>& train) {
    std::vector<Tensor> features;
    for (std::size_t s : train) {
        for (const auto& frames : bank.features.at(s)) features.insert(features.end(), frames.begin(), frames.end());
    }
    return FeatureNorm::fit(features);
}

TrainResult train_cnn_lstm_on_bank(CnnLstmModel& model, const FeatureBank& bank,
                                   const std::vector<std::size_t>& train, const TrainConfig& config) {
    if (train.empty()) throw ValidationError("training set is empty");
    model.norm = fit_norm_on_bank(bank, train);
    const std::size_t variants = bank.variants();
    auto sample = [&](std::size_t i, std::size_t epoch) {
        const std::size_t s = train[i];
        const std::size_t v = bank_variant(config.seed, epoch, i, variants);
        return head_backward(model, bank.features[s][v], one_hot(bank.labels[s]));
    };
    return train_loop(model.parameters(false), train.size(), config, sample);
}

TrainResult train_cnn_on_bank(CnnClassifier& model, const FeatureBank& bank, const std::vector<std::size_t>& train,
                              const TrainConfig& config) {
    if (train.empty()) throw ValidationError("training set is empty");
    model.norm = fit_norm_on_bank(bank, train);
    std::vector<std::pair<std::size_t, std::size_t>> images;  // (sequence, frame)
    for (std::size_t s : train) {
        for (std::size_t f = 0; f < bank.clean(s).size(); ++f) images.emplace_back(s, f);
    }
    const std::size_t variants = bank.variants();
    auto sample = [&](std::size_t i, std::size_t epoch) {
        const auto [s, f] = images[i];
        const std::size_t v = bank_variant(config.seed, epoch, i, variants);
        return head_backward(model, bank.features[s][v][f], one_hot(bank.labels[s]));
    };
    return train_loop(model.parameters(false), images.size(), config, sample);
}

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

ImageSequence joint_sample(const std::vector<ImageSequence>& sequences, std::size_t s, std::size_t epoch,
                           const AugmentPolicy& policy, std::uint64_t seed) {
    const RngStream rng = RngStream(seed, hash_key("joint_augment")).substream(epoch).substream(s);
    return augment_sequence(sequences[s], policy, rng).sequence;
}

}  // namespace

TrainResult train_cnn_lstm(CnnLstmModel& model, const std::vector<ImageSequence>& sequences,
                           const TrainConfig& config, const AugmentPolicy& policy, std::size_t augmented_variants) {
    if (sequences.empty()) throw ValidationError("training set is empty");
    if (config.freeze_extractor) {
        const FeatureBank bank = build_feature_bank(model.extractor, sequences, policy, augmented_variants, config.seed);
        return train_cnn_lstm_on_bank(model, bank, all_indices(sequences.size()), config);
    }
    const FeatureBank clean = build_feature_bank(model.extractor, sequences, policy, 0, config.seed);
    model.norm = fit_norm_on_bank(clean, all_indices(sequences.size()));
    auto sample = [&](std::size_t s, std::size_t epoch) {
        const ImageSequence seq = joint_sample(sequences, s, epoch, policy, config.seed);
        return model_backward(model, seq.frames, one_hot(seq.label), false);
    };
    return train_loop(model.parameters(true), sequences.size(), config, sample);
}

TrainResult train_cnn(CnnClassifier& model, const std::vector<ImageSequence>& sequences, const TrainConfig& config,
                      const AugmentPolicy& policy, std::size_t augmented_variants) {
    if (sequences.empty()) throw ValidationError("training set is empty");
    if (config.freeze_extractor) {
        const FeatureBank bank = build_feature_bank(model.extractor, sequences, policy, augmented_variants, config.seed);
        return train_cnn_on_bank(model, bank, all_indices(sequences.size()), config);
    }
    const FeatureBank clean = build_feature_bank(model.extractor, sequences, policy, 0, config.seed);
    model.norm = fit_norm_on_bank(clean, all_indices(sequences.size()));
    std::vector<std::pair<std::size_t, std::size_t>> images;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        for (std::size_t f = 0; f < sequences[s].length(); ++f) images.emplace_back(s, f);
    }
    auto sample = [&](std::size_t i, std::size_t epoch) {
        const auto [s, f] = images[i];
        RngStream rng = RngStream(config.seed, hash_key("joint_augment")).substream(epoch).substream(i);
        const GeometricDraw draw = draw_geometry(policy, rng);
        Tensor image = apply_geometry(sequences[s].frames[f], draw);
        if (draw.noise) image = add_gaussian_noise(image, policy.noise_sigma(), rng);
        return model_backward(model, image, one_hot(sequences[s].label), false);
    };
    return train_loop(model.parameters(true), images.size(), config, sample);
}

}  // namespace phenoseq
