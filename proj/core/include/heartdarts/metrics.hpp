// SPDX-License-Identifier: Apache-2.0
//
// Confusion-matrix metrics: per-class +P, Se, Spe, overall accuracy and
// macro Se/+P/F1, all as percentages.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "heartdarts/ecg.hpp"

namespace heartdarts {

/// Rows are the true class, columns the predicted class, both in N,S,V,F,Q order.
class ConfusionMatrix {
public:
    using Counts = std::array<std::array<std::uint64_t, kNumAamiClasses>, kNumAamiClasses>;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

    /// counts[truth][predicted] += 1; InputError for labels outside [0, 5).
    void accumulate(int truth, int predicted);
    void merge(const ConfusionMatrix& other);

    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth).at(predicted); }
    std::uint64_t row_sum(std::size_t c) const;
    std::uint64_t col_sum(std::size_t c) const;
    std::uint64_t trace() const;
    std::uint64_t total() const;
    const Counts& counts() const { return counts_; }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    Counts counts_{};
};

/// Exact ratios in percent; nullopt where the ratio is 0/0.
struct ClassMetrics {
    std::optional<double> sensitivity;
    std::optional<double> positive_predictivity;
    std::optional<double> specificity;
    std::optional<double> f1;
};

ClassMetrics per_class_metrics(const ConfusionMatrix& cm, std::size_t c);

/// Percent rounded to 2 decimals, half away from zero.
double round_percent(double v);

struct MetricsReport {
    ConfusionMatrix matrix;
    // Rounded percentages; nullopt prints as "n/a".
    std::array<std::optional<double>, kNumAamiClasses> sensitivity{};
    std::array<std::optional<double>, kNumAamiClasses> positive_predictivity{};
    std::array<std::optional<double>, kNumAamiClasses> specificity{};
    double accuracy = 0.0;
    double macro_sensitivity = 0.0;
    double macro_positive_predictivity = 0.0;
    /// Harmonic mean of the macro Se and macro +P.
    double macro_f1 = 0.0;
    /// Unweighted mean of the per-class F1 scores.
    double mean_class_f1 = 0.0;
    /// Classes left out of the macro means because a metric was undefined.
    std::size_t excluded_classes = 0;

    bool operator==(const MetricsReport&) const = default;
};

/// InputError on an empty matrix.
MetricsReport overall_metrics(const ConfusionMatrix& cm);

/// Human-readable report: the matrix block with per-class columns, followed
/// by key/value lines.
std::string format_report(const MetricsReport& r);
MetricsReport parse_report(std::string_view text);
/// Machine-readable variant.
std::string report_to_json(const MetricsReport& r);

}  // namespace heartdarts
