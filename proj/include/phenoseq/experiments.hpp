#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "phenoseq/data.hpp"
#include "phenoseq/metrics.hpp"
#include "phenoseq/model.hpp"
#include "phenoseq/optimizer.hpp"
#include "phenoseq/training.hpp"

namespace phenoseq {

enum class ModelKind { Cnn, CnnLstm };

std::string_view model_kind_name(ModelKind kind);
/// "cnn" or "cnn-lstm"; throws ValidationError otherwise.
ModelKind parse_model_kind(std::string_view name);

/// Everything that fixes how a model is built and trained.
struct Profile {
    std::string name;
    ModelConfig model;
    TrainConfig train;
    AugmentPolicy augment;
    std::size_t augmented_variants = 3;  ///< augmented feature-bank copies per sequence
    std::size_t folds = 5;
};

/// "desk" (64 px, dense-128, 30 epochs) or "paper" (224 px, dense-512, 200 epochs).
Profile make_profile(std::string_view name);

/// Parses "n" or a comma-separated list; every value must lie in 1..32.
std::vector<int> parse_session_list(std::string_view text);

/// A dataset in memory together with its content hash.
struct Dataset {
    std::vector<ImageSequence> sequences;
    std::string hash;
};

Dataset load_dataset_checked(const std::filesystem::path& manifest);
Dataset dataset_from_sequences(std::vector<ImageSequence> sequences);

struct RunOptions {
    std::uint64_t seed = 42;
    Profile profile = make_profile("desk");
    ModelKind model = ModelKind::CnnLstm;
    std::optional<int> sessions;  ///< keep sessions 1..n before anything else
    std::size_t repeats = 1;
    /// Keep the generator's cross-class twins in one fold (see twin_groups).
    bool group_twins = true;
    std::filesystem::path out;  ///< empty: nothing is written
};

struct FoldRecord {
    std::size_t repeat = 0;
    std::size_t fold = 0;
    std::optional<int> sessions;
    ConfusionMatrix confusion;
};

/// Mean and (when there are at least two units) sample standard deviation.
struct MetricSummary {
    std::string units;
    std::size_t count = 0;
    MetricSet mean;
    std::optional<MetricSet> std;
};

MetricSummary summarize(const std::string& units, const std::vector<ConfusionMatrix>& per_unit);

struct ExperimentReport {
    std::string experiment;
    nlohmann::ordered_json config;
    std::vector<FoldRecord> folds;
    ConfusionMatrix pooled;
    MetricSummary summary;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    double wall_clock_seconds = 0.0;

    /// Key order is fixed; wall-clock time is the only non-deterministic field.
    std::string to_json(bool include_wall_clock = true) const;
    /// One row per fold plus a pooled row.
    std::string to_csv() const;
};

nlohmann::ordered_json metrics_json(const MetricSet& m);

/// Seeds of one (repeat, fold) training run.
RngStream extractor_rng(std::uint64_t seed);
RngStream head_rng(std::uint64_t seed, std::size_t repeat, std::size_t fold);
std::uint64_t train_seed(std::uint64_t seed, std::size_t repeat, std::size_t fold);

ConfusionMatrix evaluate_cnn_lstm(const CnnLstmModel& model, const FeatureBank& bank,
                                  const std::vector<std::size_t>& test);
/// Every frame of every listed sequence is one test image.
ConfusionMatrix evaluate_cnn(const CnnClassifier& model, const FeatureBank& bank, const std::vector<std::size_t>& test);

/// Stratified k-fold training and evaluation, `repeats` times.
ExperimentReport run_crossval(const Dataset& data, const RunOptions& options);

struct RobustnessOptions {
    std::uint64_t seed = 42;
    std::size_t k_min = 1;
    std::size_t k_max = 10;
    double sigma = noise_sigma_for(1.0);
    std::filesystem::path models;  ///< a crossval output directory
    std::filesystem::path out;
};

/// Re-evaluates the saved cnn-lstm fold models with k noisy frames per test sequence.
ExperimentReport run_robustness(const Dataset& data, const RobustnessOptions& options);

/// One cross-validated cnn-lstm set per session count.
ExperimentReport run_ablation(const Dataset& data, const RunOptions& options, const std::vector<int>& sessions);

/// Trains one model on the whole dataset and writes its checkpoint and loss history.
TrainResult run_train(const Dataset& data, const RunOptions& options);

}  // namespace phenoseq
