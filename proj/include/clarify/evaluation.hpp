#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clarify/data.hpp"
#include "clarify/errors.hpp"

namespace clarify {

/// Spearman is undefined when either rank vector has zero variance.
class UndefinedCorrelationError : public NumericError {
 public:
  using NumericError::NumericError;
};

double accuracy(std::span<const Label> predicted, std::span<const Label> gold);
/// Id sets must be identical.
double accuracy(const LabelMap& predicted, const LabelMap& gold);

/// 1-based fractional ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);
/// Number of values that share their value with at least one other.
std::size_t tied_value_count(std::span<const double> values);

/// Pearson correlation of average ranks. Needs n >= 2 and non-constant
/// inputs; otherwise throws.
double spearman(std::span<const double> predicted, std::span<const double> gold);
double spearman(const ScoreMap& predicted, const ScoreMap& gold);

struct SubsetMetric {
  std::size_t n = 0;
  std::optional<double> value;  // absent when undefined (see `error`)
  std::string error;
};

struct MetricReport {
  Task task = Task::classification;
  std::size_t n = 0;
  double overall = 0.0;
  std::size_t ties = 0;  // tied predicted + gold values (regression only)
  std::map<Pattern, SubsetMetric> per_pattern;  // only patterns present
};

/// Overall metric plus one entry per pattern present in `patterns`.
/// Subset failures (e.g. constant scores) are recorded, not thrown; an
/// overall failure throws.
MetricReport per_pattern_report(const LabelMap& predicted, const LabelMap& gold,
                                const std::map<std::string, Pattern>& patterns);
MetricReport per_pattern_report(const ScoreMap& predicted, const ScoreMap& gold,
                                const std::map<std::string, Pattern>& patterns);

std::string report_tsv(const MetricReport& report);
/// Aligned text table with one column per pattern.
std::string report_table(const MetricReport& report);

using LabelDistribution = std::map<Pattern, std::array<std::size_t, 3>>;

/// Label counts per pattern; examples without a label are skipped.
LabelDistribution label_distribution(std::span<const FilledExample> examples);
LabelDistribution label_distribution(const LabelMap& labels,
                                     const std::map<std::string, Pattern>& patterns);
std::string label_distribution_tsv(const LabelDistribution& distribution);

/// example id -> pattern for every filler of every instance.
std::map<std::string, Pattern> example_patterns(std::span<const Instance> instances);

}  // namespace clarify
