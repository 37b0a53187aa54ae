#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "phenoseq/classes.hpp"

namespace phenoseq {

/// Rows are actual classes, columns predicted, both in BF, C, YS order.
class ConfusionMatrix {
public:
    using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

    void accumulate(StressClass actual, StressClass predicted);
    /// Index-based form; throws ValidationError for indices outside the class set.
    void accumulate(std::size_t actual, std::size_t predicted);
    void merge(const ConfusionMatrix& other);

    std::uint64_t count(std::size_t actual, std::size_t predicted) const { return counts_[actual][predicted]; }
    const Counts& counts() const { return counts_; }
    std::uint64_t total() const;
    std::uint64_t row_total(std::size_t actual) const;
    std::uint64_t column_total(std::size_t predicted) const;

    std::uint64_t true_positives(std::size_t i) const { return counts_[i][i]; }
    std::uint64_t false_negatives(std::size_t i) const { return row_total(i) - counts_[i][i]; }
    std::uint64_t false_positives(std::size_t i) const { return column_total(i) - counts_[i][i]; }
    std::uint64_t true_negatives(std::size_t i) const;

    /// CSV with a class-order header row; each data row starts with the actual class code.
    std::string to_csv() const;
    /// Row-normalized probabilities in the same layout.
    std::string to_probability_csv() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    Counts counts_{};
};

/// Macro metrics; std::nullopt marks a metric whose denominator is zero.
struct MetricSet {
    std::optional<double> overall_accuracy;   ///< correct / total
    std::optional<double> average_accuracy;   ///< mean over classes of (Tp + Tn) / total
    std::optional<double> macro_sensitivity;
    std::optional<double> macro_specificity;
    std::optional<double> macro_precision;
};

MetricSet compute_metrics(const ConfusionMatrix& cm);

std::string format_metric(const std::optional<double>& value);

}  // namespace phenoseq
