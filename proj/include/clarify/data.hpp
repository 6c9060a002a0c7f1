#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clarify/heads.hpp"

namespace clarify {

enum class Pattern { added_compound, fused_head, implicit_reference, metonymic_reference };

inline constexpr std::array<Pattern, 4> kAllPatterns = {
    Pattern::added_compound, Pattern::fused_head, Pattern::implicit_reference,
    Pattern::metonymic_reference};

/// Accepts "ADDED COMPOUND", "ADDED_COMPOUND", any case.
Pattern parse_pattern(std::string_view text);
/// Canonical "ADDED_COMPOUND" form.
std::string_view pattern_name(Pattern pattern);
/// Table-style "ADDED COMPOUND" form.
std::string pattern_title(Pattern pattern);

/// Integer values are the class indices used by the classifier.
enum class Label { implausible = 0, neutral = 1, plausible = 2 };

inline constexpr std::array<Label, 3> kAllLabels = {Label::implausible, Label::neutral,
                                                     Label::plausible};

Label parse_label(std::string_view text);
std::string_view label_name(Label label);
/// score < 2.5 -> IMPLAUSIBLE, score > 3.5 -> PLAUSIBLE, otherwise NEUTRAL.
Label label_from_score(double score);

inline constexpr std::string_view kDefaultPlaceholder = "______";
inline constexpr std::size_t kFillersPerInstance = 5;

struct Instance {
  std::string id;
  Pattern pattern = Pattern::added_compound;
  std::string title;
  std::string section_header;
  std::string previous;
  std::string target;  // contains the placeholder exactly once
  std::string followup;
  std::array<std::string, kFillersPerInstance> fillers;
};

using LabelMap = std::map<std::string, Label>;
using ScoreMap = std::map<std::string, double>;

std::vector<Instance> parse_instances(std::istream& in, const std::string& source,
                                      std::string_view placeholder = kDefaultPlaceholder);
std::vector<Instance> load_instances(const std::filesystem::path& path,
                                     std::string_view placeholder = kDefaultPlaceholder);
std::string format_instances(std::span<const Instance> instances);

LabelMap parse_labels(std::istream& in, const std::string& source);
LabelMap load_labels(const std::filesystem::path& path);
ScoreMap parse_scores(std::istream& in, const std::string& source);
ScoreMap load_scores(const std::filesystem::path& path);
std::string format_labels(const std::vector<std::pair<std::string, Label>>& rows);
std::string format_scores(const std::vector<std::pair<std::string, double>>& rows);

/// A lowercased token with its byte range in the source text.
struct WordPiece {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline constexpr std::string_view kSepMarker = "[SEP]";

/// Lowercased whitespace-and-punctuation split. Word characters are ASCII
/// alphanumerics, '_' and any non-ASCII byte; every other printable
/// character is its own token. The literal "[SEP]" stays one token.
std::vector<WordPiece> split_words(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  /// Frequency-ranked (ties lexicographic) over the words of `texts`, capped
  /// at `max_size` entries including the reserved ones.
  static Vocabulary build(std::span<const std::string> texts, std::size_t max_size);
  static Vocabulary load(const std::filesystem::path& path);
  /// One token per line; the line index is the id.
  std::string serialize() const;

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  std::string decode(std::span<const int> ids) const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct CharRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct InputSequence {
  std::string text;
  CharRange filler;
  CharRange target;  // the filled target sentence
};

/// Joins pattern, title, section header, previous, filled target and
/// follow-up with " [SEP] " and reports where the filler landed.
/// `filler_index` is 1-based.
InputSequence build_input_sequence(const Instance& instance, std::size_t filler_index,
                                   std::string_view placeholder = kDefaultPlaceholder);

struct Tokenized {
  std::vector<int> token_ids;
  SpanIndex span;
  bool span_has_unk = false;
  std::size_t truncated = 0;  // tokens dropped to fit max_len
};

/// Maps words to ids and locates the filler span. When the sequence exceeds
/// `max_len`, drops pre-target tokens from the left, then follow-up tokens
/// from the right, then target tokens around the span; never span tokens.
Tokenized tokenize(const InputSequence& input, const Vocabulary& vocab, std::size_t max_len);

struct FilledExample {
  std::string id;  // "<instance id>_<filler index>"
  std::string instance_id;
  std::size_t filler_index = 1;
  Pattern pattern = Pattern::added_compound;
  std::string filler;
  std::vector<int> token_ids;
  SpanIndex span;
  bool span_has_unk = false;
  std::optional<Label> label;
  std::optional<double> score;
};

std::string example_id(const std::string& instance_id, std::size_t filler_index);

/// Five rows per instance. When `labels`/`scores` are given every example id
/// must be present in them.
std::vector<FilledExample> expand(std::span<const Instance> instances, const Vocabulary& vocab,
                                  std::size_t max_len, const LabelMap* labels = nullptr,
                                  const ScoreMap* scores = nullptr,
                                  std::string_view placeholder = kDefaultPlaceholder);

/// True when the span decodes to the normalized filler text.
bool span_round_trips(const FilledExample& example, const Vocabulary& vocab);

/// Every pattern is a key, possibly with an empty group.
std::map<Pattern, std::vector<FilledExample>> split_by_pattern(
    std::span<const FilledExample> examples);

}  // namespace clarify
