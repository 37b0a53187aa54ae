#pragma once

#include <cstdint>
#include <vector>

#include "phenoseq/data.hpp"
#include "phenoseq/model.hpp"
#include "phenoseq/optimizer.hpp"

namespace phenoseq {

/// Extractor features of every frame for the clean sequence (variant 0) and
/// a fixed number of augmented copies. With a frozen extractor this is all
/// training and evaluation need.
struct FeatureBank {
    /// features[sequence][variant][frame], each [d]
    std::vector<std::vector<std::vector<Tensor>>> features;
    std::vector<StressClass> labels;

    std::size_t sequences() const { return features.size(); }
    std::size_t variants() const { return features.empty() ? 0 : features[0].size(); }
    const std::vector<Tensor>& clean(std::size_t seq) const { return features.at(seq).at(0); }
};

/// Augmented variant v of sequence s uses RngStream(seed, "augment") -> s -> v.
FeatureBank build_feature_bank(const FeatureExtractor& extractor, const std::vector<ImageSequence>& sequences,
                               const AugmentPolicy& policy, std::size_t augmented_variants, std::uint64_t seed);

/// Keeps, in every variant, the frames of sessions 1..n; `sequences` supplies the session numbers.
FeatureBank truncate_bank(const FeatureBank& bank, const std::vector<ImageSequence>& sequences, int n);

/// Variant used for a sample in an epoch; uniform over all variants including the clean one.
std::size_t bank_variant(std::uint64_t seed, std::size_t epoch, std::size_t sample, std::size_t variants);

/// Fits the model's feature standardization on every variant of the `train` sequences,
/// so augmentation (noise included) is part of the statistics.
FeatureNorm fit_norm_on_bank(const FeatureBank& bank, const std::vector<std::size_t>& train);

/// Head and LSTM training on cached features of the listed sequences.
TrainResult train_cnn_lstm_on_bank(CnnLstmModel& model, const FeatureBank& bank,
                                   const std::vector<std::size_t>& train, const TrainConfig& config);
/// Head training on every frame of the listed sequences as an independent image.
TrainResult train_cnn_on_bank(CnnClassifier& model, const FeatureBank& bank, const std::vector<std::size_t>& train,
                              const TrainConfig& config);

/// Trains from images. A frozen extractor goes through a feature bank; otherwise
/// every parameter is trained jointly with a fresh augmentation per epoch.
TrainResult train_cnn_lstm(CnnLstmModel& model, const std::vector<ImageSequence>& sequences,
                           const TrainConfig& config, const AugmentPolicy& policy, std::size_t augmented_variants);
TrainResult train_cnn(CnnClassifier& model, const std::vector<ImageSequence>& sequences, const TrainConfig& config,
                      const AugmentPolicy& policy, std::size_t augmented_variants);

}  // namespace phenoseq
