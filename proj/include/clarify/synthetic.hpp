#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "clarify/data.hpp"

namespace clarify {

// Synthetic grammar: words fall into `n_classes` semantic classes. Each class
// owns verbs (each paired with one adverb) and nouns (each paired with one
// adjective). A noun fits a verb iff their classes match; class c+1 (mod
// n_classes) is "related". The pairings make every content word inferable
// from its partner, so replaced tokens are detectable from context.

struct GrammarConfig {
  std::size_t n_classes = 6;
  std::size_t verbs_per_class = 4;
  std::size_t nouns_per_class = 6;
  std::uint64_t seed = 7;
};

class Lexicon {
 public:
  explicit Lexicon(const GrammarConfig& config);

  const GrammarConfig& config() const { return config_; }
  std::size_t n_classes() const { return config_.n_classes; }
  const std::string& verb(std::size_t cls, std::size_t i) const;
  const std::string& adverb(std::size_t cls, std::size_t i) const;
  const std::string& noun(std::size_t cls, std::size_t i) const;
  const std::string& adjective(std::size_t cls, std::size_t i) const;

  /// Every distinct word the grammar or the task templates can emit.
  std::vector<std::string> all_words() const;

 private:
  GrammarConfig config_;
  std::vector<std::vector<std::string>> verbs_, adverbs_, nouns_, adjectives_;
};

struct SyntheticCorpusConfig {
  std::size_t n_sentences = 20000;
  std::size_t min_len = 6;
  std::size_t max_len = 32;
  std::size_t vocab_size = 512;
  std::uint64_t seed = 7;
};

/// Sentences as word lists; deterministic in (config, lexicon).
std::vector<std::vector<std::string>> generate_corpus_words(const SyntheticCorpusConfig& config,
                                                            const Lexicon& lexicon);

/// Token-id sentences under `vocab`. Throws ConfigError when the vocabulary
/// budget cannot hold the grammar.
std::vector<std::vector<int>> generate_corpus(const SyntheticCorpusConfig& config,
                                              const Lexicon& lexicon, const Vocabulary& vocab);

std::string format_corpus(const std::vector<std::vector<int>>& corpus);
std::vector<std::vector<int>> load_corpus(const std::filesystem::path& path);

struct SyntheticTaskConfig {
  std::size_t train_per_pattern = 200;
  std::size_t dev_per_pattern = 50;
  std::size_t test_per_pattern = 50;
  /// 0 = balanced labels per pattern; 1 = fully pattern-specific skew.
  double label_skew = 0.0;
  std::uint64_t seed = 7;
};

struct SyntheticSplit {
  std::vector<Instance> instances;
  LabelMap labels;
  ScoreMap scores;
};

struct SyntheticTask {
  SyntheticSplit train, dev, test;
};

SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config, const Lexicon& lexicon);

/// Words of corpus sentences plus every training input sequence; the text
/// the vocabulary is built from.
std::vector<std::string> vocabulary_texts(const std::vector<std::vector<std::string>>& corpus,
                                          const std::vector<Instance>& train);

}  // namespace clarify
