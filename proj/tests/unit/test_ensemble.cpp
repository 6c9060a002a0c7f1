#include <doctest.h>

#include <sstream>

#include "clarify/ensemble.hpp"
#include "clarify/errors.hpp"
#include "clarify/rng.hpp"

using namespace clarify;

namespace {

PredictionEntry cls_entry(const std::string& id, Pattern p, std::array<double, 3> probs) {
  PredictionEntry e;
  e.id = id;
  e.pattern = p;
  e.probs = probs;
  return e;
}

PredictionEntry reg_entry(const std::string& id, Pattern p, double score) {
  PredictionEntry e;
  e.id = id;
  e.pattern = p;
  e.score = score;
  return e;
}

std::map<std::string, Pattern> pattern_map(const PredictionSet& s) { return s.patterns(); }

}  // namespace

TEST_CASE("prediction sets are validated and sorted") {
  const auto set = make_prediction_set(
      "m", Task::classification,
      {cls_entry("b", Pattern::fused_head, {0.1, 0.2, 0.7}), cls_entry("a", Pattern::fused_head, {0.5, 0.5, 0.0})});
  CHECK(set.entries[0].id == "a");
  CHECK(set.labels().at("a") == Label::implausible);  // tie -> lower class index
  CHECK(set.labels().at("b") == Label::plausible);
  CHECK_THROWS_AS(make_prediction_set("m", Task::classification,
                                      {cls_entry("a", Pattern::fused_head, {0.5, 0.6, 0.0})}),
                  InputError);
  CHECK_THROWS_AS(make_prediction_set("m", Task::classification,
                                      {cls_entry("a", Pattern::fused_head, {1.0, 0.0, 0.0}),
                                       cls_entry("a", Pattern::fused_head, {1.0, 0.0, 0.0})}),
                  InputError);
  CHECK_THROWS_AS(make_prediction_set("m", Task::regression, {reg_entry("a", Pattern::fused_head, 5.5)}),
                  InputError);
}

TEST_CASE("prediction TSV round trip and errors") {
  const auto set = make_prediction_set(
      "m", Task::classification,
      {cls_entry("x_1", Pattern::added_compound, {0.1, 0.2, 0.7}),
       cls_entry("x_2", Pattern::fused_head, {1.0 / 3, 1.0 / 3, 1.0 / 3})});
  std::istringstream in(format_prediction_set(set));
  const auto back = parse_prediction_set(in, "p.tsv", "m", pattern_map(set));
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].probs == set.entries[1].probs);
  CHECK(back.entries[1].pattern == Pattern::fused_head);

  std::istringstream reg("x_1\t2.5\nx_2\t4\n");
  CHECK(parse_prediction_set(reg, "r.tsv", "r", pattern_map(set)).task == Task::regression);

  std::istringstream bad("x_1\t0.1\t0.2\n");
  CHECK_THROWS_WITH_AS(parse_prediction_set(bad, "bad.tsv", "b", pattern_map(set)),
                       doctest::Contains("bad.tsv:1"), InputError);
  std::istringstream unknown("zz\t3\n");
  CHECK_THROWS_AS(parse_prediction_set(unknown, "u.tsv", "u", pattern_map(set)), InputError);
}

TEST_CASE("standard ensemble of one set is that set") {
  const auto set = make_prediction_set("only", Task::regression,
                                       {reg_entry("a", Pattern::fused_head, 1.7),
                                        reg_entry("b", Pattern::added_compound, 4.2)});
  const std::vector<PredictionSet> sets = {set};
  const auto out = standard_ensemble(sets);
  CHECK(format_prediction_set(out) == format_prediction_set(set));
}

TEST_CASE("standard ensemble averages") {
  const auto a = make_prediction_set("a", Task::classification,
                                     {cls_entry("x", Pattern::fused_head, {1.0, 0.0, 0.0})});
  const auto b = make_prediction_set("b", Task::classification,
                                     {cls_entry("x", Pattern::fused_head, {0.0, 0.5, 0.5})});
  const std::vector<PredictionSet> sets = {a, b};
  const auto out = standard_ensemble(sets);
  CHECK(out.entries[0].probs[0] == doctest::Approx(0.5));
  CHECK(out.entries[0].probs[1] == doctest::Approx(0.25));
  const auto ra = make_prediction_set("a", Task::regression, {reg_entry("x", Pattern::fused_head, 2.0)});
  const auto rb = make_prediction_set("b", Task::regression, {reg_entry("x", Pattern::fused_head, 5.0)});
  const std::vector<PredictionSet> rs = {ra, rb};
  CHECK(standard_ensemble(rs).entries[0].score == doctest::Approx(3.5));
  const auto other = make_prediction_set("c", Task::regression, {reg_entry("y", Pattern::fused_head, 5.0)});
  const std::vector<PredictionSet> misaligned = {ra, other};
  CHECK_THROWS(standard_ensemble(misaligned));
}

TEST_CASE("member selection ranks, breaks ties by id and puts undefined last") {
  const std::map<std::string, std::optional<double>> metrics = {
      {"c", 0.7}, {"a", std::nullopt}, {"b", 0.7}, {"d", 0.5}};
  const auto top1 = select_members(metrics, EnsembleMode::select_top1, 1);
  CHECK(top1.members == std::vector<std::string>{"b"});
  CHECK(top1.ranked.back().model_id == "a");
  CHECK(top1.tie_note.find("b, c") != std::string::npos);
  const auto top3 = select_members(metrics, EnsembleMode::mean_topk, 3);
  CHECK(top3.members == std::vector<std::string>{"b", "c", "d"});
  CHECK(top3.tie_note.empty());
  CHECK_THROWS_AS(select_members(metrics, EnsembleMode::mean_topk, 5), ConfigError);
  CHECK_THROWS_AS(select_members(metrics, EnsembleMode::mean_topk, 0), ConfigError);
  CHECK(parse_ensemble_mode("mean_topk") == EnsembleMode::mean_topk);
  CHECK_THROWS_AS(parse_ensemble_mode("vote"), ConfigError);
}

TEST_CASE("pattern-aware ensemble copies the chosen member per pattern") {
  // Model "p" is right on FUSED HEAD, model "q" on ADDED COMPOUND.
  auto make = [](const std::string& id, bool fused_right) {
    std::vector<PredictionEntry> e;
    for (int i = 0; i < 4; ++i) {
      const bool fused = i < 2;
      const bool right = fused == fused_right;
      e.push_back(cls_entry("x_" + std::to_string(i), fused ? Pattern::fused_head : Pattern::added_compound,
                            right ? std::array<double, 3>{0.1, 0.1, 0.8} : std::array<double, 3>{0.8, 0.1, 0.1}));
    }
    return make_prediction_set(id, Task::classification, e);
  };
  const std::vector<PredictionSet> dev = {make("p", true), make("q", false)};
  Gold gold;
  for (int i = 0; i < 4; ++i) gold.labels["x_" + std::to_string(i)] = Label::plausible;
  const auto result = pattern_aware_ensemble(dev, gold, dev, EnsembleMode::select_top1);
  CHECK(result.spec.patterns.at(Pattern::fused_head).members == std::vector<std::string>{"p"});
  CHECK(result.spec.patterns.at(Pattern::added_compound).members == std::vector<std::string>{"q"});
  CHECK(overall_metric(result.dev, gold) == 1.0);
  CHECK(overall_metric(dev[0], gold) == 0.5);
  CHECK(format_spec_audit(result.spec).find("FUSED HEAD") != std::string::npos);

  std::vector<PredictionSet> reserved = {make(std::string(kStandardEnsembleId), true)};
  CHECK_THROWS_AS(pattern_aware_ensemble(reserved, gold, reserved, EnsembleMode::select_top1), ConfigError);
  const std::vector<PredictionSet> test_only_p = {dev[0]};
  CHECK_THROWS_AS(pattern_aware_ensemble(dev, gold, test_only_p, EnsembleMode::select_top1), ConfigError);
}

TEST_CASE("mean_topk averages the top members") {
  auto make = [](const std::string& id, double p_plausible) {
    return make_prediction_set(id, Task::classification,
                               {cls_entry("x_0", Pattern::fused_head,
                                          {1.0 - p_plausible, 0.0, p_plausible})});
  };
  const std::vector<PredictionSet> dev = {make("a", 0.9), make("b", 0.6), make("c", 0.1)};
  Gold gold;
  gold.labels["x_0"] = Label::plausible;
  const auto result = pattern_aware_ensemble(dev, gold, dev, EnsembleMode::mean_topk, 2);
  const auto& members = result.spec.patterns.at(Pattern::fused_head).members;
  CHECK(members.size() == 2);
  CHECK(result.spec.k == 2);
}
