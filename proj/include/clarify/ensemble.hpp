#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clarify/data.hpp"
#include "clarify/evaluation.hpp"
#include "clarify/heads.hpp"

namespace clarify {

struct PredictionEntry {
  std::string id;
  Pattern pattern = Pattern::added_compound;
  std::array<double, 3> probs{};  // classification only
  double score = 0.0;             // regression only
};

struct PredictionSet {
  std::string model_id;
  Task task = Task::classification;
  std::vector<PredictionEntry> entries;  // ascending id

  /// Argmax class per example; ties go to the lower class index.
  LabelMap labels() const;
  ScoreMap scores() const;
  std::map<std::string, Pattern> patterns() const;
};

/// Gold annotations; only the map matching the set's task is consulted.
struct Gold {
  LabelMap labels;
  ScoreMap scores;
};

inline constexpr std::string_view kStandardEnsembleId = "standard_ensemble";

/// Sorts by id and rejects duplicates, unknown patterns, probability rows
/// that are negative or do not sum to 1 within 1e-6, and scores outside the
/// model's range.
PredictionSet make_prediction_set(std::string model_id, Task task,
                                  std::vector<PredictionEntry> entries);

/// Headerless TSV: "id<TAB>p_implausible<TAB>p_neutral<TAB>p_plausible" or
/// "id<TAB>score". Values use the shortest round-trip representation.
std::string format_prediction_set(const PredictionSet& set);
/// Task is inferred from the column count; patterns come from `patterns`.
PredictionSet parse_prediction_set(std::istream& in, const std::string& source,
                                   std::string model_id,
                                   const std::map<std::string, Pattern>& patterns);
/// The model id is the file stem.
PredictionSet load_prediction_set(const std::filesystem::path& path,
                                  const std::map<std::string, Pattern>& patterns);

/// Mean probability vector (renormalized) or mean score per example.
PredictionSet standard_ensemble(std::span<const PredictionSet> sets,
                                std::string model_id = std::string(kStandardEnsembleId));

double overall_metric(const PredictionSet& set, const Gold& gold);
MetricReport report_for(const PredictionSet& set, const Gold& gold);
/// Metric on each pattern subset present in the set. Subsets where the
/// metric is undefined carry an error instead of a value.
std::map<Pattern, SubsetMetric> score_per_pattern(const PredictionSet& set, const Gold& gold);

enum class EnsembleMode { select_top1, mean_topk };

EnsembleMode parse_ensemble_mode(std::string_view text);
std::string_view ensemble_mode_name(EnsembleMode mode);

struct CandidateScore {
  std::string model_id;
  std::optional<double> metric;  // absent when undefined on this subset
};

struct PatternChoice {
  std::vector<CandidateScore> ranked;  // best first
  std::vector<std::string> members;    // chosen, best first
  std::size_t n_dev = 0;
  /// Non-empty when equal metrics were separated by model id.
  std::string tie_note;
  std::string note;
};

struct PatternEnsembleSpec {
  Task task = Task::classification;
  EnsembleMode mode = EnsembleMode::select_top1;
  std::size_t k = 1;
  std::map<Pattern, PatternChoice> patterns;
};

/// Ranks candidates by metric (higher first, undefined last, ties by model
/// id) and keeps the top 1 or top k. k larger than the candidate count is a
/// ConfigError.
PatternChoice select_members(const std::map<std::string, std::optional<double>>& metrics,
                             EnsembleMode mode, std::size_t k);

/// For every example: copy of the single member's prediction or the
/// standard ensemble of the members. `candidates` must include every model
/// `spec` names. Patterns without a choice use the standard ensemble.
PredictionSet apply_ensemble_spec(const PatternEnsembleSpec& spec,
                                  std::span<const PredictionSet> candidates,
                                  std::string model_id = "pattern_aware_ensemble");

struct EnsembleResult {
  PatternEnsembleSpec spec;
  PredictionSet dev;   // `spec` applied to the dev candidates
  PredictionSet test;  // `spec` applied to the test candidates
};

/// Per-pattern ensembling driven by dev performance. The standard ensemble
/// of all models joins the candidate pool under kStandardEnsembleId.
EnsembleResult pattern_aware_ensemble(std::span<const PredictionSet> dev_sets, const Gold& dev_gold,
                                      std::span<const PredictionSet> test_sets, EnsembleMode mode,
                                      std::size_t k = 1);

/// Human-readable audit: per pattern, ranked candidates with dev metrics
/// and the chosen members.
std::string format_spec_audit(const PatternEnsembleSpec& spec);

}  // namespace clarify
