#include "clarify/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "clarify/text.hpp"

namespace clarify {

namespace {

template <typename Map>
void require_same_ids(const Map& predicted, const Map& gold) {
  if (predicted.size() != gold.size()) {
    throw InputError("prediction covers " + std::to_string(predicted.size()) +
                     " ids but gold has " + std::to_string(gold.size()));
  }
  for (auto p = predicted.begin(), g = gold.begin(); p != predicted.end(); ++p, ++g) {
    if (p->first != g->first) {
      throw InputError("id mismatch between prediction and gold at '" + p->first + "' / '" +
                       g->first + "'");
    }
  }
}

std::string format_metric(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << value;
  return out.str();
}

}  // namespace

double accuracy(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.size() != gold.size()) throw InputError("accuracy: length mismatch");
  if (predicted.empty()) throw InputError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double accuracy(const LabelMap& predicted, const LabelMap& gold) {
  require_same_ids(predicted, gold);
  std::vector<Label> p, g;
  for (const auto& [id, label] : predicted) p.push_back(label);
  for (const auto& [id, label] : gold) g.push_back(label);
  return accuracy(p, g);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share rank mean((i+1)..(j+1)).
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::size_t tied_value_count(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t tied = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool left = i > 0 && sorted[i - 1] == sorted[i];
    const bool right = i + 1 < sorted.size() && sorted[i + 1] == sorted[i];
    tied += (left || right) ? 1 : 0;
  }
  return tied;
}

double spearman(std::span<const double> predicted, std::span<const double> gold) {
  if (predicted.size() != gold.size()) throw InputError("spearman: length mismatch");
  if (predicted.size() < 2) throw InputError("spearman needs at least 2 values");
  const auto rp = average_ranks(predicted);
  const auto rg = average_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mean_p = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mean_g = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
  double cov = 0.0, var_p = 0.0, var_g = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    const double dp = rp[i] - mean_p;
    const double dg = rg[i] - mean_g;
    cov += dp * dg;
    var_p += dp * dp;
    var_g += dg * dg;
  }
  if (var_p == 0.0 || var_g == 0.0) {
    throw UndefinedCorrelationError(
        std::string("spearman undefined: ") + (var_p == 0.0 ? "predicted" : "gold") +
        " values are constant");
  }
  return std::clamp(cov / std::sqrt(var_p * var_g), -1.0, 1.0);
}

double spearman(const ScoreMap& predicted, const ScoreMap& gold) {
  require_same_ids(predicted, gold);
  std::vector<double> p, g;
  for (const auto& [id, v] : predicted) p.push_back(v);
  for (const auto& [id, v] : gold) g.push_back(v);
  return spearman(p, g);
}

namespace {

template <typename Map, typename Metric>
MetricReport build_report(Task task, const Map& predicted, const Map& gold,
                          const std::map<std::string, Pattern>& patterns, Metric metric) {
  require_same_ids(predicted, gold);
  MetricReport report;
  report.task = task;
  report.n = predicted.size();
  report.overall = metric(predicted, gold);

  std::map<Pattern, std::pair<Map, Map>> subsets;
  for (const auto& [id, value] : predicted) {
    const auto it = patterns.find(id);
    if (it == patterns.end()) throw InputError("no pattern known for example " + id);
    subsets[it->second].first.emplace(id, value);
    subsets[it->second].second.emplace(id, gold.at(id));
  }
  for (const auto& [pattern, pair] : subsets) {
    SubsetMetric m;
    m.n = pair.first.size();
    try {
      m.value = metric(pair.first, pair.second);
    } catch (const Error& e) {
      m.error = e.what();
    }
    report.per_pattern.emplace(pattern, std::move(m));
  }
  return report;
}

}  // namespace

MetricReport per_pattern_report(const LabelMap& predicted, const LabelMap& gold,
                                const std::map<std::string, Pattern>& patterns) {
  return build_report(Task::classification, predicted, gold, patterns,
                      [](const LabelMap& p, const LabelMap& g) { return accuracy(p, g); });
}

MetricReport per_pattern_report(const ScoreMap& predicted, const ScoreMap& gold,
                                const std::map<std::string, Pattern>& patterns) {
  auto report = build_report(Task::regression, predicted, gold, patterns,
                             [](const ScoreMap& p, const ScoreMap& g) { return spearman(p, g); });
  std::vector<double> p, g;
  for (const auto& [id, v] : predicted) p.push_back(v);
  for (const auto& [id, v] : gold) g.push_back(v);
  report.ties = tied_value_count(p) + tied_value_count(g);
  return report;
}

std::string report_tsv(const MetricReport& report) {
  const std::string metric = report.task == Task::classification ? "accuracy" : "spearman";
  std::string out = "subset\tmetric\tn\tvalue\n";
  out += "OVERALL\t" + metric + "\t" + std::to_string(report.n) + "\t" +
         format_double(report.overall) + "\n";
  for (const auto& [pattern, m] : report.per_pattern) {
    out += std::string(pattern_name(pattern)) + "\t" + metric + "\t" + std::to_string(m.n) + "\t" +
           (m.value ? format_double(*m.value) : "undefined") + "\n";
  }
  return out;
}

std::string report_table(const MetricReport& report) {
  const bool cls = report.task == Task::classification;
  std::vector<std::string> headers = {"Metric"};
  std::vector<std::string> values = {cls ? "Accuracy" : "Spearman"};
  std::vector<std::string> counts = {"n"};
  for (const auto& [pattern, m] : report.per_pattern) {
    headers.push_back(pattern_title(pattern));
    values.push_back(m.value ? format_metric(*m.value) : "undefined");
    counts.push_back(std::to_string(m.n));
  }
  headers.push_back("OVERALL");
  values.push_back(format_metric(report.overall));
  counts.push_back(std::to_string(report.n));

  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    widths.push_back(std::max({headers[i].size(), values[i].size(), counts[i].size()}));
  }
  auto row = [&](const std::vector<std::string>& cells) {
    std::ostringstream line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) line << "  ";
      line << std::left << std::setw(static_cast<int>(widths[i])) << cells[i];
    }
    std::string s = line.str();
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string rule(std::accumulate(widths.begin(), widths.end(), std::size_t{0}) +
                       2 * (widths.size() - 1),
                   '-');
  std::string out = row(headers) + rule + "\n" + row(values) + row(counts) + rule + "\n";
  for (const auto& [pattern, m] : report.per_pattern) {
    if (!m.value) out += pattern_title(pattern) + ": " + m.error + "\n";
  }
  if (!cls) {
    out += "Ties: " + std::to_string(report.ties) +
           " tied values; ranks use fractional averaging. Whether official scoring applied a "
           "tie correction is not known.\n";
  }
  return out;
}

LabelDistribution label_distribution(std::span<const FilledExample> examples) {
  LabelDistribution dist;
  for (const auto& ex : examples) {
    if (!ex.label) continue;
    ++dist[ex.pattern][static_cast<std::size_t>(*ex.label)];
  }
  return dist;
}

LabelDistribution label_distribution(const LabelMap& labels,
                                     const std::map<std::string, Pattern>& patterns) {
  LabelDistribution dist;
  for (const auto& [id, label] : labels) {
    const auto it = patterns.find(id);
    if (it == patterns.end()) throw InputError("no pattern known for example " + id);
    ++dist[it->second][static_cast<std::size_t>(label)];
  }
  return dist;
}

std::string label_distribution_tsv(const LabelDistribution& distribution) {
  std::string out = "pattern\tIMPLAUSIBLE\tNEUTRAL\tPLAUSIBLE\ttotal\n";
  for (const auto& [pattern, counts] : distribution) {
    out += std::string(pattern_name(pattern));
    std::size_t total = 0;
    for (auto c : counts) {
      out += "\t" + std::to_string(c);
      total += c;
    }
    out += "\t" + std::to_string(total) + "\n";
  }
  return out;
}

std::map<std::string, Pattern> example_patterns(std::span<const Instance> instances) {
  std::map<std::string, Pattern> out;
  for (const auto& inst : instances) {
    for (std::size_t f = 1; f <= kFillersPerInstance; ++f) out[example_id(inst.id, f)] = inst.pattern;
  }
  return out;
}

}  // namespace clarify
