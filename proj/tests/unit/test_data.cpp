#include <doctest.h>

#include <set>
#include <sstream>

#include "clarify/data.hpp"
#include "clarify/errors.hpp"

using namespace clarify;

namespace {

const std::string kHeader =
    "Id\tPattern\tTitle\tSection\tPrevious\tSentence\tFollow-up\tFiller1\tFiller2\tFiller3\tFiller4\tFiller5\n";

Instance make_instance(const std::string& id, Pattern pattern = Pattern::fused_head) {
  Instance inst;
  inst.id = id;
  inst.pattern = pattern;
  inst.title = "How to Bake Bread";
  inst.section_header = "Getting Started";
  inst.previous = "Preheat the oven.";
  inst.target = "Put the ______ in the oven.";
  inst.followup = "Wait an hour.";
  inst.fillers = {"bread", "dough", "pan", "baking tray", "cat"};
  return inst;
}

Vocabulary vocab_for(const std::vector<Instance>& instances) {
  std::vector<std::string> texts;
  for (const auto& inst : instances) {
    for (std::size_t f = 1; f <= kFillersPerInstance; ++f) {
      texts.push_back(build_input_sequence(inst, f).text);
    }
  }
  return Vocabulary::build(texts, 1000);
}

}  // namespace

TEST_CASE("instance TSV round trip") {
  std::vector<Instance> instances = {make_instance("a1"), make_instance("a2", Pattern::added_compound)};
  instances[1].section_header = "";
  std::istringstream in(format_instances(instances));
  const auto parsed = parse_instances(in, "mem");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].id == "a2");
  CHECK(parsed[1].pattern == Pattern::added_compound);
  CHECK(parsed[1].section_header.empty());
  CHECK(parsed[0].fillers[3] == "baking tray");
}

TEST_CASE("instance parsing errors") {
  {
    std::istringstream in(kHeader);
    CHECK(parse_instances(in, "mem").empty());
  }
  {
    std::istringstream in("Id\tPattern\tTitle\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains("missing column"), InputError);
  }
  {
    std::istringstream in(kHeader + "x1\tBOGUS\tt\ts\tp\tA ______.\tf\ta\tb\tc\td\te\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains("x1"), InputError);
  }
  {
    std::istringstream in(kHeader + "x2\tFUSED_HEAD\tt\ts\tp\tNo marker.\tf\ta\tb\tc\td\te\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains("x2"), InputError);
  }
  {
    std::istringstream in(kHeader + "x3\tFUSED_HEAD\tt\ts\tp\tA ______.\tf\ta\tb\tc\td\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains("x3"), InputError);
  }
}

TEST_CASE("pattern and label names") {
  CHECK(parse_pattern("ADDED COMPOUND") == Pattern::added_compound);
  CHECK(parse_pattern("metonymic_reference") == Pattern::metonymic_reference);
  CHECK(pattern_title(Pattern::implicit_reference) == "IMPLICIT REFERENCE");
  CHECK(parse_label("PLAUSIBLE") == Label::plausible);
  CHECK_THROWS_AS(parse_label("MAYBE"), InputError);
  CHECK(label_from_score(2.49) == Label::implausible);
  CHECK(label_from_score(2.5) == Label::neutral);
  CHECK(label_from_score(3.5) == Label::neutral);
  CHECK(label_from_score(3.51) == Label::plausible);
}

TEST_CASE("label and score files") {
  {
    std::istringstream in("t1_1\tPLAUSIBLE\n");
    const auto labels = parse_labels(in, "mem");
    CHECK(labels.at("t1_1") == Label::plausible);
  }
  {
    std::istringstream in("t1_1\t5.0\nt1_2\t1\n");
    const auto scores = parse_scores(in, "mem");
    CHECK(scores.at("t1_1") == 5.0);
  }
  {
    std::istringstream in("t1_1\t5.1\n");
    CHECK_THROWS_AS(parse_scores(in, "mem"), InputError);
  }
  {
    std::istringstream in("t1_1\t0.99\n");
    CHECK_THROWS_AS(parse_scores(in, "mem"), InputError);
  }
  {
    std::istringstream in("t1_1\tNEUTRAL\nt1_1\tPLAUSIBLE\n");
    CHECK_THROWS_WITH_AS(parse_labels(in, "mem"), doctest::Contains("t1_1"), InputError);
  }
  {
    std::istringstream in("t1_1\tSOMETIMES\n");
    CHECK_THROWS_AS(parse_labels(in, "mem"), InputError);
  }
}

TEST_CASE("input sequences join fields in order") {
  const Instance inst = make_instance("b1");
  const auto seq = build_input_sequence(inst, 4);
  CHECK(seq.text ==
        "FUSED_HEAD [SEP] How to Bake Bread [SEP] Getting Started [SEP] Preheat the oven. [SEP] "
        "Put the baking tray in the oven. [SEP] Wait an hour.");
  CHECK(seq.text.substr(seq.filler.begin, seq.filler.end - seq.filler.begin) == "baking tray");

  Instance empty_header = inst;
  empty_header.section_header = "";
  const auto seq2 = build_input_sequence(empty_header, 1);
  CHECK(seq2.text.find("[SEP]  [SEP]") != std::string::npos);
  CHECK_THROWS_AS(build_input_sequence(inst, 0), InputError);
  CHECK_THROWS_AS(build_input_sequence(inst, 6), InputError);
}

TEST_CASE("word splitting") {
  const auto pieces = split_words("Put the Baking-tray, [SEP] now!");
  std::vector<std::string> words;
  for (const auto& p : pieces) words.push_back(p.text);
  CHECK(words == std::vector<std::string>{"put", "the", "baking", "-", "tray", ",", "[SEP]", "now", "!"});
}

TEST_CASE("vocabulary") {
  const std::vector<std::string> texts = {"b a a", "c b a"};
  const auto v = Vocabulary::build(texts, 100);
  CHECK(v.size() == Vocabulary::kReserved + 3);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.id("c") == 6);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(v.token(Vocabulary::kSep) == "[SEP]");
  const auto capped = Vocabulary::build(texts, 5);
  CHECK(capped.size() == 5);
  CHECK(capped.id("c") == Vocabulary::kUnk);
  CHECK(v.decode(std::vector<int>{5, 6}) == "b c");
}

TEST_CASE("tokenize locates the filler span") {
  const Instance inst = make_instance("c1");
  const auto vocab = vocab_for({inst});
  const auto one = tokenize(build_input_sequence(inst, 1), vocab, 128);
  CHECK(one.span.length() == 1);
  CHECK(vocab.token(one.token_ids[one.span.begin]) == "bread");
  const auto two = tokenize(build_input_sequence(inst, 4), vocab, 128);
  CHECK(two.span.length() == 2);
  CHECK(two.truncated == 0);
}

TEST_CASE("over-length inputs lose previous-sentence tokens first") {
  Instance inst = make_instance("c2");
  inst.previous = "one two three four five six seven eight nine ten eleven twelve.";
  const auto vocab = vocab_for({inst});
  const auto full = tokenize(build_input_sequence(inst, 4), vocab, 1000);
  const std::size_t n = full.token_ids.size();
  const auto cut = tokenize(build_input_sequence(inst, 4), vocab, n - 10);
  CHECK(cut.truncated == 10);
  CHECK(cut.token_ids.size() == n - 10);
  // Only leading tokens went; the span still decodes.
  CHECK(std::equal(cut.token_ids.begin(), cut.token_ids.end(), full.token_ids.begin() + 10));
  CHECK(vocab.decode(std::span<const int>(cut.token_ids).subspan(cut.span.begin, 2)) == "baking tray");
  // A two-token span fits in two tokens but not in one.
  CHECK_NOTHROW(tokenize(build_input_sequence(inst, 4), vocab, 2));
  CHECK_THROWS_AS(tokenize(build_input_sequence(inst, 4), vocab, 1), InputError);
}

TEST_CASE("expand yields five examples per instance with unique ids") {
  std::vector<Instance> instances;
  for (int i = 0; i < 100; ++i) {
    instances.push_back(make_instance("d" + std::to_string(i), kAllPatterns[i % 4]));
  }
  const auto vocab = vocab_for(instances);
  const auto examples = expand(instances, vocab, 128);
  CHECK(examples.size() == 500);
  std::set<std::string> ids;
  for (const auto& ex : examples) {
    ids.insert(ex.id);
    CHECK(span_round_trips(ex, vocab));
  }
  CHECK(ids.size() == 500);
  LabelMap partial = {{"d0_1", Label::plausible}};
  CHECK_THROWS_WITH_AS(expand(instances, vocab, 128, &partial), doctest::Contains("d0_2"), InputError);
}

TEST_CASE("UNK fillers are flagged") {
  const Instance inst = make_instance("e1");
  auto vocab = vocab_for({make_instance("e0")});
  Instance other = inst;
  other.fillers[0] = "zeppelin";
  const auto examples = expand(std::vector<Instance>{other}, vocab, 128);
  CHECK(examples[0].span_has_unk);
  CHECK_FALSE(examples[1].span_has_unk);
}

TEST_CASE("split_by_pattern partitions") {
  CHECK(split_by_pattern({}).size() == 4);
  for (const auto& [p, group] : split_by_pattern({})) CHECK(group.empty());
  std::vector<Instance> instances;
  for (int i = 0; i < 10; ++i) instances.push_back(make_instance("f" + std::to_string(i), kAllPatterns[i % 3]));
  const auto vocab = vocab_for(instances);
  const auto examples = expand(instances, vocab, 128);
  const auto groups = split_by_pattern(examples);
  std::size_t total = 0;
  std::set<std::string> seen;
  for (const auto& [p, group] : groups) {
    for (const auto& ex : group) {
      CHECK(ex.pattern == p);
      CHECK(seen.insert(ex.id).second);
    }
    total += group.size();
  }
  CHECK(total == examples.size());
  CHECK(groups.at(Pattern::metonymic_reference).empty());
}
