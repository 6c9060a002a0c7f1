#include "clarify/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "clarify/errors.hpp"
#include "clarify/text.hpp"

namespace clarify {

namespace {

constexpr double kProbSumTolerance = 1e-6;

Label argmax_label(const std::array<double, 3>& p) {
  return static_cast<Label>(std::max_element(p.begin(), p.end()) - p.begin());
}

void require_aligned(const PredictionSet& a, const PredictionSet& b) {
  if (a.task != b.task) {
    throw InputError("prediction sets " + a.model_id + " and " + b.model_id +
                     " are for different tasks");
  }
  if (a.entries.size() != b.entries.size()) {
    throw InputError("prediction sets " + a.model_id + " and " + b.model_id + " cover " +
                     std::to_string(a.entries.size()) + " and " +
                     std::to_string(b.entries.size()) + " examples");
  }
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].id != b.entries[i].id) {
      throw InputError("prediction sets " + a.model_id + " and " + b.model_id +
                       " disagree on example ids at '" + a.entries[i].id + "' / '" +
                       b.entries[i].id + "'");
    }
  }
}

std::string format_metric(const std::optional<double>& value) {
  if (!value) return "undefined";
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << *value;
  return out.str();
}

}  // namespace

LabelMap PredictionSet::labels() const {
  LabelMap out;
  for (const auto& e : entries) out.emplace(e.id, argmax_label(e.probs));
  return out;
}

ScoreMap PredictionSet::scores() const {
  ScoreMap out;
  for (const auto& e : entries) out.emplace(e.id, e.score);
  return out;
}

std::map<std::string, Pattern> PredictionSet::patterns() const {
  std::map<std::string, Pattern> out;
  for (const auto& e : entries) out.emplace(e.id, e.pattern);
  return out;
}

PredictionSet make_prediction_set(std::string model_id, Task task,
                                  std::vector<PredictionEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const PredictionEntry& a, const PredictionEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i > 0 && entries[i - 1].id == e.id) {
      throw InputError(model_id + ": duplicate prediction for " + e.id);
    }
    if (task == Task::classification) {
      double total = 0.0;
      for (double p : e.probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
          throw InputError(model_id + ": probability outside [0, 1] for " + e.id);
        }
        total += p;
      }
      if (std::abs(total - 1.0) > kProbSumTolerance) {
        throw InputError(model_id + ": probabilities for " + e.id + " sum to " +
                         format_double(total));
      }
    } else if (!(e.score >= kScoreMin && e.score <= kScoreMax)) {
      throw InputError(model_id + ": score " + format_double(e.score) + " for " + e.id +
                       " is outside [1, 5]");
    }
  }
  return PredictionSet{std::move(model_id), task, std::move(entries)};
}

std::string format_prediction_set(const PredictionSet& set) {
  std::string out;
  for (const auto& e : set.entries) {
    out += e.id;
    if (set.task == Task::classification) {
      for (double p : e.probs) out += "\t" + format_double(p);
    } else {
      out += "\t" + format_double(e.score);
    }
    out += "\n";
  }
  return out;
}

PredictionSet parse_prediction_set(std::istream& in, const std::string& source,
                                   std::string model_id,
                                   const std::map<std::string, Pattern>& patterns) {
  std::vector<PredictionEntry> entries;
  std::optional<Task> task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto cols = split(line, '\t');
    Task row_task;
    if (cols.size() == 4) {
      row_task = Task::classification;
    } else if (cols.size() == 2) {
      row_task = Task::regression;
    } else {
      throw InputError(where + ": expected 2 or 4 tab-separated columns, got " +
                       std::to_string(cols.size()));
    }
    if (task && *task != row_task) throw InputError(where + ": column count changes mid-file");
    task = row_task;

    PredictionEntry e;
    e.id = cols[0];
    const auto it = patterns.find(e.id);
    if (it == patterns.end()) throw InputError(where + ": unknown example id " + e.id);
    e.pattern = it->second;
    try {
      if (row_task == Task::classification) {
        for (std::size_t c = 0; c < 3; ++c) e.probs[c] = parse_double(cols[c + 1]);
      } else {
        e.score = parse_double(cols[1]);
      }
    } catch (const InputError& err) {
      throw InputError(where + ": " + err.what());
    }
    entries.push_back(std::move(e));
  }
  if (!task) throw InputError(source + ": no predictions");
  try {
    return make_prediction_set(std::move(model_id), *task, std::move(entries));
  } catch (const InputError& err) {
    throw InputError(source + ": " + err.what());
  }
}

PredictionSet load_prediction_set(const std::filesystem::path& path,
                                  const std::map<std::string, Pattern>& patterns) {
  std::istringstream in(read_file(path));
  return parse_prediction_set(in, path.string(), path.stem().string(), patterns);
}

PredictionSet standard_ensemble(std::span<const PredictionSet> sets, std::string model_id) {
  if (sets.empty()) throw ConfigError("ensemble of zero prediction sets");
  for (std::size_t s = 1; s < sets.size(); ++s) require_aligned(sets[0], sets[s]);
  PredictionSet out{std::move(model_id), sets[0].task, sets[0].entries};
  if (sets.size() == 1) return out;
  const double n = static_cast<double>(sets.size());
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    auto& e = out.entries[i];
    if (out.task == Task::classification) {
      std::array<double, 3> mean{};
      for (const auto& set : sets) {
        for (std::size_t c = 0; c < 3; ++c) mean[c] += set.entries[i].probs[c];
      }
      double total = 0.0;
      for (auto& p : mean) total += (p /= n);
      for (auto& p : mean) p /= total;
      e.probs = mean;
    } else {
      double mean = 0.0;
      for (const auto& set : sets) mean += set.entries[i].score;
      e.score = mean / n;
    }
  }
  return out;
}

namespace {

template <typename Map>
Map restrict_gold(const Map& gold, const PredictionSet& set) {
  Map out;
  for (const auto& e : set.entries) {
    const auto it = gold.find(e.id);
    if (it == gold.end()) throw InputError("no gold annotation for " + e.id);
    out.emplace(e.id, it->second);
  }
  return out;
}

}  // namespace

double overall_metric(const PredictionSet& set, const Gold& gold) {
  return set.task == Task::classification ? accuracy(set.labels(), restrict_gold(gold.labels, set))
                                          : spearman(set.scores(), restrict_gold(gold.scores, set));
}

MetricReport report_for(const PredictionSet& set, const Gold& gold) {
  const auto patterns = set.patterns();
  if (set.task == Task::classification) {
    return per_pattern_report(set.labels(), restrict_gold(gold.labels, set), patterns);
  }
  return per_pattern_report(set.scores(), restrict_gold(gold.scores, set), patterns);
}

std::map<Pattern, SubsetMetric> score_per_pattern(const PredictionSet& set, const Gold& gold) {
  std::map<Pattern, SubsetMetric> out;
  for (Pattern pattern : kAllPatterns) {
    PredictionSet subset{set.model_id, set.task, {}};
    for (const auto& e : set.entries) {
      if (e.pattern == pattern) subset.entries.push_back(e);
    }
    if (subset.entries.empty()) continue;
    SubsetMetric m;
    m.n = subset.entries.size();
    try {
      m.value = set.task == Task::classification
                    ? accuracy(subset.labels(), restrict_gold(gold.labels, subset))
                    : spearman(subset.scores(), restrict_gold(gold.scores, subset));
    } catch (const UndefinedCorrelationError& e) {
      m.error = e.what();
    }
    out.emplace(pattern, std::move(m));
  }
  return out;
}

EnsembleMode parse_ensemble_mode(std::string_view text) {
  if (text == "select_top1") return EnsembleMode::select_top1;
  if (text == "mean_topk") return EnsembleMode::mean_topk;
  throw ConfigError("unknown ensemble mode '" + std::string(text) +
                    "' (expected select_top1 or mean_topk)");
}

std::string_view ensemble_mode_name(EnsembleMode mode) {
  return mode == EnsembleMode::select_top1 ? "select_top1" : "mean_topk";
}

PatternChoice select_members(const std::map<std::string, std::optional<double>>& metrics,
                             EnsembleMode mode, std::size_t k) {
  const std::size_t take = mode == EnsembleMode::select_top1 ? 1 : k;
  if (take == 0) throw ConfigError("ensemble needs k >= 1");
  if (take > metrics.size()) {
    throw ConfigError("k = " + std::to_string(take) + " exceeds the " +
                      std::to_string(metrics.size()) + " candidates");
  }
  PatternChoice choice;
  for (const auto& [id, metric] : metrics) choice.ranked.push_back({id, metric});
  // The map is already in id order, so a stable sort on the metric alone
  // breaks ties lexicographically.
  std::stable_sort(choice.ranked.begin(), choice.ranked.end(),
                   [](const CandidateScore& a, const CandidateScore& b) {
                     if (a.metric.has_value() != b.metric.has_value()) return a.metric.has_value();
                     return a.metric && *a.metric > *b.metric;
                   });
  for (std::size_t i = 0; i < take; ++i) choice.members.push_back(choice.ranked[i].model_id);

  const auto& last = choice.ranked[take - 1];
  std::vector<std::string> tied;
  for (std::size_t i = 0; i < choice.ranked.size(); ++i) {
    if (choice.ranked[i].metric == last.metric) tied.push_back(choice.ranked[i].model_id);
  }
  if (take < choice.ranked.size() && choice.ranked[take].metric == last.metric) {
    choice.tie_note = "tie at " + format_metric(last.metric) + " between";
    for (std::size_t i = 0; i < tied.size(); ++i) {
      choice.tie_note += (i == 0 ? " " : ", ") + tied[i];
    }
    choice.tie_note += "; broken by model id";
  }
  if (!choice.ranked.front().metric) choice.note = "metric undefined for every candidate";
  return choice;
}

PredictionSet apply_ensemble_spec(const PatternEnsembleSpec& spec,
                                  std::span<const PredictionSet> candidates,
                                  std::string model_id) {
  if (candidates.empty()) throw ConfigError("no candidate prediction sets");
  std::map<std::string, const PredictionSet*> by_id;
  for (const auto& c : candidates) {
    if (c.task != spec.task) throw InputError(c.model_id + " is for the wrong task");
    if (!by_id.emplace(c.model_id, &c).second) {
      throw ConfigError("duplicate candidate model id " + c.model_id);
    }
    require_aligned(candidates[0], c);
  }
  auto member_sets = [&](const std::vector<std::string>& members) {
    std::vector<PredictionSet> sets;
    for (const auto& m : members) {
      const auto it = by_id.find(m);
      if (it == by_id.end()) throw ConfigError("ensemble spec names unknown model " + m);
      sets.push_back(*it->second);
    }
    return sets;
  };
  std::map<Pattern, PredictionSet> per_pattern;
  for (Pattern pattern : kAllPatterns) {
    const auto it = spec.patterns.find(pattern);
    if (it != spec.patterns.end()) {
      per_pattern.emplace(pattern, standard_ensemble(member_sets(it->second.members)));
    } else {
      std::vector<PredictionSet> all(candidates.begin(), candidates.end());
      per_pattern.emplace(pattern, standard_ensemble(all));
    }
  }
  PredictionSet out{std::move(model_id), spec.task, {}};
  for (std::size_t i = 0; i < candidates[0].entries.size(); ++i) {
    const Pattern pattern = candidates[0].entries[i].pattern;
    out.entries.push_back(per_pattern.at(pattern).entries[i]);
  }
  return out;
}

EnsembleResult pattern_aware_ensemble(std::span<const PredictionSet> dev_sets, const Gold& dev_gold,
                                      std::span<const PredictionSet> test_sets, EnsembleMode mode,
                                      std::size_t k) {
  if (dev_sets.empty()) throw ConfigError("pattern-aware ensemble needs at least one model");
  std::set<std::string> dev_ids, test_ids;
  for (const auto& s : dev_sets) {
    if (s.model_id == kStandardEnsembleId) {
      throw ConfigError("model id '" + s.model_id + "' is reserved");
    }
    if (!dev_ids.insert(s.model_id).second) throw ConfigError("duplicate model id " + s.model_id);
  }
  for (const auto& s : test_sets) test_ids.insert(s.model_id);
  if (dev_ids != test_ids || test_ids.size() != test_sets.size()) {
    throw ConfigError("dev and test prediction sets must name the same models");
  }

  std::vector<PredictionSet> dev_candidates(dev_sets.begin(), dev_sets.end());
  dev_candidates.push_back(standard_ensemble(dev_sets));
  std::vector<PredictionSet> test_candidates(test_sets.begin(), test_sets.end());
  test_candidates.push_back(standard_ensemble(test_sets));

  EnsembleResult result;
  result.spec.task = dev_sets[0].task;
  result.spec.mode = mode;
  result.spec.k = mode == EnsembleMode::select_top1 ? 1 : k;
  if (result.spec.k > dev_candidates.size()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " +
                      std::to_string(dev_candidates.size()) +
                      " candidates (models plus the standard ensemble)");
  }

  std::map<Pattern, std::map<std::string, std::optional<double>>> table;
  std::map<Pattern, std::size_t> sizes;
  for (const auto& c : dev_candidates) {
    for (const auto& [pattern, m] : score_per_pattern(c, dev_gold)) {
      table[pattern][c.model_id] = m.value;
      sizes[pattern] = m.n;
    }
  }
  for (const auto& [pattern, metrics] : table) {
    PatternChoice choice = select_members(metrics, mode, result.spec.k);
    choice.n_dev = sizes[pattern];
    result.spec.patterns.emplace(pattern, std::move(choice));
  }
  result.dev = apply_ensemble_spec(result.spec, dev_candidates);
  result.test = apply_ensemble_spec(result.spec, test_candidates);
  return result;
}

std::string format_spec_audit(const PatternEnsembleSpec& spec) {
  std::ostringstream out;
  out << "pattern-aware ensemble\n";
  out << "task\t" << task_name(spec.task) << "\n";
  out << "mode\t" << ensemble_mode_name(spec.mode) << "\n";
  out << "k\t" << spec.k << "\n";
  out << "metric\t" << (spec.task == Task::classification ? "accuracy" : "spearman")
      << " on the dev subset of each pattern\n";
  for (Pattern pattern : kAllPatterns) {
    out << "\n[" << pattern_title(pattern) << "]\n";
    const auto it = spec.patterns.find(pattern);
    if (it == spec.patterns.end()) {
      out << "no dev examples; standard ensemble of all models\n";
      continue;
    }
    const auto& choice = it->second;
    out << "n_dev\t" << choice.n_dev << "\n";
    std::size_t width = 0;
    for (const auto& c : choice.ranked) width = std::max(width, c.model_id.size());
    for (std::size_t i = 0; i < choice.ranked.size(); ++i) {
      const auto& c = choice.ranked[i];
      const bool chosen =
          std::find(choice.members.begin(), choice.members.end(), c.model_id) != choice.members.end();
      out << std::setw(3) << (i + 1) << "  " << std::left << std::setw(static_cast<int>(width))
          << c.model_id << std::right << "  " << format_metric(c.metric)
          << (chosen ? "  *" : "") << "\n";
    }
    out << "chosen\t";
    for (std::size_t i = 0; i < choice.members.size(); ++i) {
      out << (i == 0 ? "" : ", ") << choice.members[i];
    }
    out << "\n";
    if (!choice.tie_note.empty()) out << "tie\t" << choice.tie_note << "\n";
    if (!choice.note.empty()) out << "note\t" << choice.note << "\n";
  }
  return out.str();
}

}  // namespace clarify
