#include "clarify/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "clarify/errors.hpp"
#include "clarify/rng.hpp"
#include "clarify/text.hpp"

namespace clarify {

namespace {

const std::vector<std::string>& function_words() {
  static const std::vector<std::string> kWords = {
      "the", "with", "it", "then", "use", "now", "first", "how", "to", "things", ".", ":", ","};
  return kWords;
}

// Context sentences that carry no class information.
const std::vector<std::string>& generic_sentences() {
  static const std::vector<std::string> kSentences = {
      "Get your things ready.",       "Take your time.",
      "Make sure everything fits.",   "Check it again.",
      "Keep going until you are done.", "Be careful.",
      "You can start now.",           "It is all in the method.",
      "Ask for help if you need it.", "Clear some space first.",
  };
  return kSentences;
}

const std::vector<std::string>& generic_titles() {
  static const std::vector<std::string> kTitles = {
      "How to Get Things Ready", "How to Plan Ahead", "How to Start Over",
      "How to Work Faster",      "How to Finish Up",  "How to Stay Organized",
  };
  return kTitles;
}

const std::vector<std::string>& section_headers() {
  static const std::vector<std::string> kHeaders = {"", "Part One", "Part Two", "Method One",
                                                    "Method Two", "Getting Started"};
  return kHeaders;
}

std::string make_pseudo_word(RngStream& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  const std::size_t syllables = 2 + rng.below(2);
  std::string word;
  for (std::size_t s = 0; s < syllables; ++s) {
    word.push_back(kConsonants[rng.below(kConsonants.size())]);
    word.push_back(kVowels[rng.below(kVowels.size())]);
  }
  return word;
}

std::string capitalize(std::string text) {
  if (!text.empty() && text[0] >= 'a' && text[0] <= 'z') text[0] = static_cast<char>(text[0] - 'a' + 'A');
  return text;
}

// Space-joins words, attaching '.', ':' and ',' to the previous word.
std::string render(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    const bool punct = w == "." || w == ":" || w == ",";
    if (!out.empty() && !punct) out.push_back(' ');
    out += w;
  }
  return out;
}

constexpr double kScoreJitter = 0.3;

// Per-pattern label mix (IMPLAUSIBLE, NEUTRAL, PLAUSIBLE) at skew 1.
std::array<double, 3> skew_profile(Pattern p) {
  switch (p) {
    case Pattern::added_compound: return {0.2, 0.2, 0.6};
    case Pattern::fused_head: return {0.45, 0.1, 0.45};
    case Pattern::implicit_reference: return {0.2, 0.25, 0.55};
    case Pattern::metonymic_reference: return {0.3, 0.3, 0.4};
  }
  return {1.0 / 3, 1.0 / 3, 1.0 / 3};
}

// Largest-remainder allocation of `total` slots to the three labels.
std::array<std::size_t, 3> allocate_labels(std::size_t total, const std::array<double, 3>& mix) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = mix[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best]) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

}  // namespace

Lexicon::Lexicon(const GrammarConfig& config) : config_(config) {
  if (config.n_classes < 4) throw ConfigError("grammar needs at least 4 classes");
  if (config.verbs_per_class == 0) throw ConfigError("grammar needs verbs");
  if (config.nouns_per_class < kFillersPerInstance) {
    throw ConfigError("grammar needs at least 5 nouns per class");
  }
  RngStream rng(config.seed, "lexicon");
  std::set<std::string> used(function_words().begin(), function_words().end());
  for (const auto* texts : {&generic_sentences(), &generic_titles(), &section_headers()}) {
    for (const auto& s : *texts) {
      for (const auto& w : split_words(s)) used.insert(w.text);
    }
  }
  auto fresh = [&](std::string_view suffix) {
    while (true) {
      std::string w = make_pseudo_word(rng) + std::string(suffix);
      if (used.insert(w).second) return w;
    }
  };
  const std::size_t c_count = config.n_classes;
  verbs_.resize(c_count);
  adverbs_.resize(c_count);
  nouns_.resize(c_count);
  adjectives_.resize(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t i = 0; i < config.verbs_per_class; ++i) {
      verbs_[c].push_back(fresh(""));
      adverbs_[c].push_back(fresh("ly"));
    }
    for (std::size_t i = 0; i < config.nouns_per_class; ++i) {
      nouns_[c].push_back(fresh(""));
      adjectives_[c].push_back(fresh("ic"));
    }
  }
}

const std::string& Lexicon::verb(std::size_t cls, std::size_t i) const { return verbs_.at(cls).at(i); }
const std::string& Lexicon::adverb(std::size_t cls, std::size_t i) const { return adverbs_.at(cls).at(i); }
const std::string& Lexicon::noun(std::size_t cls, std::size_t i) const { return nouns_.at(cls).at(i); }
const std::string& Lexicon::adjective(std::size_t cls, std::size_t i) const {
  return adjectives_.at(cls).at(i);
}

std::vector<std::string> Lexicon::all_words() const {
  std::set<std::string> words(function_words().begin(), function_words().end());
  for (const auto* group : {&verbs_, &adverbs_, &nouns_, &adjectives_}) {
    for (const auto& cls : *group) words.insert(cls.begin(), cls.end());
  }
  for (const auto* texts : {&generic_sentences(), &generic_titles(), &section_headers()}) {
    for (const auto& s : *texts) {
      for (const auto& w : split_words(s)) words.insert(w.text);
    }
  }
  for (Pattern p : kAllPatterns) words.insert(to_lower(pattern_name(p)));
  return {words.begin(), words.end()};
}

std::vector<std::vector<std::string>> generate_corpus_words(const SyntheticCorpusConfig& config,
                                                            const Lexicon& lexicon) {
  if (config.min_len > config.max_len) throw ConfigError("corpus min_len exceeds max_len");
  if (config.max_len < 10) throw ConfigError("corpus max_len must be at least 10");
  const auto& g = lexicon.config();
  RngStream rng(config.seed, "corpus");

  auto clause = [&](RngStream& r) {
    const std::size_t c = r.below(g.n_classes);
    const std::size_t v = r.below(g.verbs_per_class);
    const std::size_t n = r.below(g.nouns_per_class);
    const auto& verb = lexicon.verb(c, v);
    const auto& adv = lexicon.adverb(c, v);
    const auto& noun = lexicon.noun(c, n);
    const auto& adj = lexicon.adjective(c, n);
    switch (r.below(5)) {
      case 0:
        return std::vector<std::string>{adv, verb, "the", adj, noun, "."};
      case 1: {
        std::size_t m = r.below(g.nouns_per_class - 1);
        if (m >= n) ++m;
        return std::vector<std::string>{adv, verb, "the", adj, noun, "with", "the",
                                        lexicon.adjective(c, m), lexicon.noun(c, m), "."};
      }
      case 2:
        return std::vector<std::string>{adv, verb, "it", ".", "then", "use", "the", adj, noun, "."};
      case 3:
        return std::vector<std::string>{"use", "the", adj, noun, ".", "then", adv, verb, "it", "."};
      default:
        return std::vector<std::string>{"how", "to", verb, "things", ":", adv,
                                        verb,  "the", adj, noun, "."};
    }
  };

  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(config.n_sentences);
  for (std::size_t s = 0; s < config.n_sentences; ++s) {
    RngStream r = rng.fork("sentence-" + std::to_string(s));
    const std::size_t target = config.min_len + r.below(config.max_len - config.min_len + 1);
    std::vector<std::string> sentence;
    std::size_t rejected = 0;
    while (sentence.size() < target && rejected < 64) {
      auto next = clause(r);
      if (sentence.size() + next.size() > config.max_len) {
        if (sentence.size() >= config.min_len) break;
        ++rejected;  // draw a shorter clause
        continue;
      }
      sentence.insert(sentence.end(), next.begin(), next.end());
    }
    corpus.push_back(std::move(sentence));
  }
  return corpus;
}

std::vector<std::vector<int>> generate_corpus(const SyntheticCorpusConfig& config,
                                              const Lexicon& lexicon, const Vocabulary& vocab) {
  const std::size_t needed = lexicon.all_words().size() + Vocabulary::kReserved;
  if (needed > config.vocab_size) {
    throw ConfigError("vocab_size " + std::to_string(config.vocab_size) +
                      " too small for a grammar needing " + std::to_string(needed) + " tokens");
  }
  if (vocab.size() > config.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " entries, more than vocab_size " + std::to_string(config.vocab_size));
  }
  std::vector<std::vector<int>> corpus;
  for (const auto& words : generate_corpus_words(config, lexicon)) {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.id(w));
    corpus.push_back(std::move(ids));
  }
  return corpus;
}

std::string format_corpus(const std::vector<std::vector<int>>& corpus) {
  std::string out;
  for (const auto& sentence : corpus) {
    for (std::size_t i = 0; i < sentence.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += std::to_string(sentence[i]);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<std::vector<int>> load_corpus(const std::filesystem::path& path) {
  std::vector<std::vector<int>> corpus;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<int> ids;
    for (const auto& cell : split(std::string(trim(line)), ' ')) {
      if (cell.empty()) continue;
      try {
        ids.push_back(static_cast<int>(parse_size(cell)));
      } catch (const InputError& e) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    corpus.push_back(std::move(ids));
  }
  return corpus;
}

namespace {

SyntheticSplit generate_split(const std::string& name, std::size_t per_pattern, double skew,
                              const Lexicon& lexicon, RngStream rng) {
  const auto& g = lexicon.config();
  SyntheticSplit split;
  std::size_t serial = 0;
  for (Pattern pattern : kAllPatterns) {
    RngStream prng = rng.fork(std::string(pattern_name(pattern)));
    const auto profile = skew_profile(pattern);
    std::array<double, 3> mix{};
    for (std::size_t i = 0; i < 3; ++i) mix[i] = (1.0 - skew) / 3.0 + skew * profile[i];
    const auto counts = allocate_labels(per_pattern * kFillersPerInstance, mix);
    std::vector<Label> slots;
    for (std::size_t i = 0; i < 3; ++i) slots.insert(slots.end(), counts[i], kAllLabels[i]);
    prng.shuffle(std::span<Label>(slots));

    for (std::size_t k = 0; k < per_pattern; ++k) {
      Instance inst;
      inst.id = name + "_" + std::to_string(++serial);
      inst.pattern = pattern;
      const std::size_t c = prng.below(g.n_classes);
      const std::size_t v = prng.below(g.verbs_per_class);
      const auto& verb = lexicon.verb(c, v);
      const auto& adv = lexicon.adverb(c, v);
      auto generic = [&] { return generic_sentences()[prng.below(generic_sentences().size())]; };

      inst.title = pattern == Pattern::metonymic_reference
                       ? "How to " + capitalize(verb) + " Things"
                       : generic_titles()[prng.below(generic_titles().size())];
      inst.section_header = section_headers()[prng.below(section_headers().size())];
      inst.previous = pattern == Pattern::implicit_reference
                          ? render({"First", adv, verb, "it", "."})
                          : generic();
      inst.target = pattern == Pattern::added_compound
                        ? render({capitalize(adv), verb, "the", std::string(kDefaultPlaceholder), "."})
                        : render({"Now", "use", "the", std::string(kDefaultPlaceholder), "."});
      inst.followup = pattern == Pattern::fused_head ? render({"Then", adv, verb, "it", "."})
                                                     : generic();

      std::set<std::pair<std::size_t, std::size_t>> used_nouns;
      for (std::size_t f = 0; f < kFillersPerInstance; ++f) {
        const Label label = slots[k * kFillersPerInstance + f];
        std::size_t cls = c;
        if (label == Label::neutral) cls = (c + 1) % g.n_classes;
        if (label == Label::implausible) cls = (c + 2 + prng.below(g.n_classes - 2)) % g.n_classes;
        std::size_t n = 0;
        do {
          n = prng.below(g.nouns_per_class);
        } while (!used_nouns.emplace(cls, n).second);
        inst.fillers[f] = prng.below(2) == 0
                              ? lexicon.noun(cls, n)
                              : lexicon.adjective(cls, n) + " " + lexicon.noun(cls, n);

        const double base = label == Label::plausible ? 5.0 : label == Label::neutral ? 3.0 : 1.0;
        const double jitter = std::round((prng.uniform() * 2.0 - 1.0) * kScoreJitter * 100.0) / 100.0;
        const double score = std::clamp(base + jitter, kScoreMin, kScoreMax);
        const std::string id = example_id(inst.id, f + 1);
        split.labels[id] = label;
        split.scores[id] = score;
      }
      split.instances.push_back(std::move(inst));
    }
  }
  return split;
}

}  // namespace

SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config, const Lexicon& lexicon) {
  if (!(config.label_skew >= 0.0 && config.label_skew <= 1.0)) {
    throw ConfigError("label_skew must be in [0, 1]");
  }
  RngStream rng(config.seed, "task");
  SyntheticTask task;
  task.train = generate_split("train", config.train_per_pattern, config.label_skew, lexicon,
                              rng.fork("train"));
  task.dev = generate_split("dev", config.dev_per_pattern, config.label_skew, lexicon,
                            rng.fork("dev"));
  task.test = generate_split("test", config.test_per_pattern, config.label_skew, lexicon,
                             rng.fork("test"));
  return task;
}

std::vector<std::string> vocabulary_texts(const std::vector<std::vector<std::string>>& corpus,
                                          const std::vector<Instance>& train) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size() + train.size() * kFillersPerInstance);
  for (const auto& sentence : corpus) texts.push_back(render(sentence));
  for (const auto& inst : train) {
    for (std::size_t f = 1; f <= kFillersPerInstance; ++f) {
      texts.push_back(build_input_sequence(inst, f).text);
    }
  }
  return texts;
}

}  // namespace clarify
