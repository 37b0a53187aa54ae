#include "phenoseq/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "phenoseq/tensor.hpp"

namespace phenoseq {

void ConfusionMatrix::accumulate(StressClass actual, StressClass predicted) {
    ++counts_[class_index(actual)][class_index(predicted)];
}

void ConfusionMatrix::accumulate(std::size_t actual, std::size_t predicted) {
    accumulate(class_from_index(actual), class_from_index(predicted));
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        for (std::size_t j = 0; j < kNumClasses; ++j) counts_[i][j] += other.counts_[i][j];
    }
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts_) {
        for (std::uint64_t v : row) n += v;
    }
    return n;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t actual) const {
    std::uint64_t n = 0;
    for (std::uint64_t v : counts_[actual]) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::column_total(std::size_t predicted) const {
    std::uint64_t n = 0;
    for (const auto& row : counts_) n += row[predicted];
    return n;
}

std::uint64_t ConfusionMatrix::true_negatives(std::size_t i) const {
    return total() - true_positives(i) - false_negatives(i) - false_positives(i);
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream out;
    out << "actual\\predicted";
    for (StressClass c : kAllClasses) out << ',' << class_code(c);
    out << '\n';
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        out << class_code(class_from_index(i));
        for (std::size_t j = 0; j < kNumClasses; ++j) out << ',' << counts_[i][j];
        out << '\n';
    }
    return out.str();
}

std::string ConfusionMatrix::to_probability_csv() const {
    std::ostringstream out;
    out << "actual\\predicted";
    for (StressClass c : kAllClasses) out << ',' << class_code(c);
    out << '\n';
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        out << class_code(class_from_index(i));
        const std::uint64_t row = row_total(i);
        for (std::size_t j = 0; j < kNumClasses; ++j) {
            out << ',';
            if (row == 0) {
                out << "undefined";
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(counts_[i][j]) / static_cast<double>(row));
                out << buf;
            }
        }
        out << '\n';
    }
    return out.str();
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

// Mean over classes; undefined if any class term is undefined.
template <typename Fn>
std::optional<double> macro(Fn&& per_class) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        const std::optional<double> v = per_class(i);
        if (!v) return std::nullopt;
        acc += *v;
    }
    return acc / static_cast<double>(kNumClasses);
}

}  // namespace

MetricSet compute_metrics(const ConfusionMatrix& cm) {
    MetricSet m;
    const std::uint64_t total = cm.total();
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) correct += cm.true_positives(i);
    m.overall_accuracy = ratio(correct, total);
    m.average_accuracy = macro([&](std::size_t i) { return ratio(cm.true_positives(i) + cm.true_negatives(i), total); });
    m.macro_sensitivity = macro([&](std::size_t i) {
        return ratio(cm.true_positives(i), cm.true_positives(i) + cm.false_negatives(i));
    });
    m.macro_specificity = macro([&](std::size_t i) {
        return ratio(cm.true_negatives(i), cm.true_negatives(i) + cm.false_positives(i));
    });
    m.macro_precision = macro([&](std::size_t i) {
        return ratio(cm.true_positives(i), cm.true_positives(i) + cm.false_positives(i));
    });
    return m;
}

std::string format_metric(const std::optional<double>& value) {
    if (!value) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *value);
    return buf;
}

}  // namespace phenoseq
