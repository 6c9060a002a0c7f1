#include "clarify/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "clarify/errors.hpp"
#include "clarify/text.hpp"

namespace clarify {

namespace {

constexpr std::array<std::string_view, 4> kReservedTokens = {"[PAD]", "[UNK]", "[SEP]", "[MASK]"};

std::string normalize_key(std::string_view text) {
  std::string out;
  for (char c : trim(text)) {
    out.push_back(c == ' ' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

// Canonical column -> accepted header spellings (normalized).
const std::vector<std::pair<std::string, std::vector<std::string>>>& column_aliases() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kColumns = {
      {"Id", {"ID"}},
      {"Pattern", {"PATTERN", "RESOLVED_PATTERN"}},
      {"Title", {"TITLE", "ARTICLE_TITLE"}},
      {"Section", {"SECTION", "SECTION_HEADER"}},
      {"Previous", {"PREVIOUS", "PREVIOUS_CONTEXT"}},
      {"Sentence", {"SENTENCE"}},
      {"Follow-up", {"FOLLOW_UP", "FOLLOW_UP_CONTEXT"}},
      {"Filler1", {"FILLER1"}},
      {"Filler2", {"FILLER2"}},
      {"Filler3", {"FILLER3"}},
      {"Filler4", {"FILLER4"}},
      {"Filler5", {"FILLER5"}},
  };
  return kColumns;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string normalized_words(std::string_view text) {
  std::string out;
  for (const auto& piece : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += piece.text;
  }
  return out;
}

}  // namespace

Pattern parse_pattern(std::string_view text) {
  const std::string key = normalize_key(text);
  for (Pattern p : kAllPatterns) {
    if (key == pattern_name(p)) return p;
  }
  throw InputError("unknown pattern '" + std::string(text) + "'");
}

std::string_view pattern_name(Pattern pattern) {
  switch (pattern) {
    case Pattern::added_compound: return "ADDED_COMPOUND";
    case Pattern::fused_head: return "FUSED_HEAD";
    case Pattern::implicit_reference: return "IMPLICIT_REFERENCE";
    case Pattern::metonymic_reference: return "METONYMIC_REFERENCE";
  }
  return "?";
}

std::string pattern_title(Pattern pattern) {
  std::string out(pattern_name(pattern));
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

Label parse_label(std::string_view text) {
  const std::string key = normalize_key(text);
  for (Label l : kAllLabels) {
    if (key == label_name(l)) return l;
  }
  throw InputError("unknown label '" + std::string(text) + "'");
}

std::string_view label_name(Label label) {
  switch (label) {
    case Label::implausible: return "IMPLAUSIBLE";
    case Label::neutral: return "NEUTRAL";
    case Label::plausible: return "PLAUSIBLE";
  }
  return "?";
}

Label label_from_score(double score) {
  if (score < 2.5) return Label::implausible;
  if (score > 3.5) return Label::plausible;
  return Label::neutral;
}

std::vector<Instance> parse_instances(std::istream& in, const std::string& source,
                                      std::string_view placeholder) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(source + ": missing header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, '\t');

  std::vector<std::size_t> column_index;
  for (const auto& [canonical, aliases] : column_aliases()) {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto key = normalize_key(header[i]);
      if (std::find(aliases.begin(), aliases.end(), key) != aliases.end()) found = i;
    }
    if (!found) throw InputError(source + ": missing column '" + canonical + "'");
    column_index.push_back(*found);
  }

  std::vector<Instance> instances;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, '\t');
    const std::string where = source + ":" + std::to_string(line_no);
    auto cell = [&](std::size_t column) -> std::optional<std::string> {
      const std::size_t idx = column_index[column];
      if (idx >= cells.size()) return std::nullopt;
      return cells[idx];
    };

    Instance inst;
    inst.id = std::string(trim(cell(0).value_or("")));
    if (inst.id.empty()) throw InputError(where + ": empty id");
    if (!seen.insert(inst.id).second) throw InputError(where + ": duplicate id " + inst.id);
    const auto pattern_cell = cell(1);
    if (!pattern_cell) throw InputError(where + ": row " + inst.id + " has no pattern");
    try {
      inst.pattern = parse_pattern(*pattern_cell);
    } catch (const InputError& e) {
      throw InputError(where + ": row " + inst.id + ": " + e.what());
    }
    inst.title = cell(2).value_or("");
    inst.section_header = cell(3).value_or("");
    inst.previous = cell(4).value_or("");
    inst.target = cell(5).value_or("");
    inst.followup = cell(6).value_or("");

    std::size_t n_fillers = 0;
    for (std::size_t f = 0; f < kFillersPerInstance; ++f) {
      const auto value = cell(7 + f);
      if (value && !trim(*value).empty()) {
        inst.fillers[f] = std::string(trim(*value));
        ++n_fillers;
      }
    }
    if (n_fillers != kFillersPerInstance) {
      throw InputError(where + ": row " + inst.id + " has " + std::to_string(n_fillers) +
                       " fillers, expected " + std::to_string(kFillersPerInstance));
    }
    const auto markers = count_occurrences(inst.target, placeholder);
    if (markers != 1) {
      throw InputError(where + ": row " + inst.id + " target sentence has " +
                       std::to_string(markers) + " placeholders, expected exactly 1");
    }
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::vector<Instance> load_instances(const std::filesystem::path& path,
                                     std::string_view placeholder) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_instances(in, path.string(), placeholder);
}

std::string format_instances(std::span<const Instance> instances) {
  std::string out;
  for (std::size_t i = 0; i < column_aliases().size(); ++i) {
    if (i > 0) out += '\t';
    out += column_aliases()[i].first;
  }
  out += '\n';
  for (const auto& inst : instances) {
    out += inst.id + '\t' + std::string(pattern_name(inst.pattern)) + '\t' + inst.title + '\t' +
           inst.section_header + '\t' + inst.previous + '\t' + inst.target + '\t' + inst.followup;
    for (const auto& filler : inst.fillers) out += '\t' + filler;
    out += '\n';
  }
  return out;
}

namespace {

template <typename Value, typename Parse>
std::map<std::string, Value> parse_keyed(std::istream& in, const std::string& source,
                                         Parse parse) {
  std::map<std::string, Value> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cells = split(line, '\t');
    if (cells.size() != 2) {
      throw InputError(where + ": expected 'example_id<TAB>value', got " +
                       std::to_string(cells.size()) + " columns");
    }
    const std::string id(trim(cells[0]));
    Value value;
    try {
      value = parse(cells[1], id);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    if (!out.emplace(id, value).second) throw InputError(where + ": duplicate id " + id);
  }
  return out;
}

}  // namespace

LabelMap parse_labels(std::istream& in, const std::string& source) {
  return parse_keyed<Label>(in, source,
                            [](const std::string& cell, const std::string&) { return parse_label(cell); });
}

LabelMap load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_labels(in, path.string());
}

ScoreMap parse_scores(std::istream& in, const std::string& source) {
  return parse_keyed<double>(in, source, [](const std::string& cell, const std::string& id) {
    const double score = parse_double(cell);
    if (!(score >= kScoreMin && score <= kScoreMax)) {
      throw InputError("score " + std::string(trim(cell)) + " for " + id +
                       " outside [1, 5]");
    }
    return score;
  });
}

ScoreMap load_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_scores(in, path.string());
}

std::string format_labels(const std::vector<std::pair<std::string, Label>>& rows) {
  std::string out;
  for (const auto& [id, label] : rows) out += id + '\t' + std::string(label_name(label)) + '\n';
  return out;
}

std::string format_scores(const std::vector<std::pair<std::string, double>>& rows) {
  std::string out;
  for (const auto& [id, score] : rows) out += id + '\t' + format_double(score) + '\n';
  return out;
}

std::vector<WordPiece> split_words(std::string_view text) {
  std::vector<WordPiece> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) != 0) {
      ++i;
    } else if (text.substr(i, kSepMarker.size()) == kSepMarker) {
      pieces.push_back({std::string(kSepMarker), i, i + kSepMarker.size()});
      i += kSepMarker.size();
    } else if (is_word_byte(c)) {
      const std::size_t start = i;
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
      pieces.push_back({to_lower(text.substr(start, i - start)), start, i});
    } else {
      pieces.push_back({std::string(1, static_cast<char>(c)), i, i + 1});
      ++i;
    }
  }
  return pieces;
}

Vocabulary::Vocabulary() {
  for (auto token : kReservedTokens) add(std::string(token));
}

void Vocabulary::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
  if (max_size < kReserved) throw ConfigError("vocabulary cap below reserved token count");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& piece : split_words(text)) {
      if (piece.text != kSepMarker) ++counts[piece.text];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [token, count] : ranked) {
    if (vocab.size() >= max_size) break;
    if (!vocab.contains(token)) vocab.add(token);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.size() < kReserved) throw InputError(path.string() + ": vocabulary too short");
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (lines[i] != kReservedTokens[i]) {
      throw InputError(path.string() + ": line " + std::to_string(i + 1) + " must be " +
                       std::string(kReservedTokens[i]));
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kReserved; i < lines.size(); ++i) {
    if (lines[i].empty()) throw InputError(path.string() + ": empty token on line " + std::to_string(i + 1));
    if (vocab.contains(lines[i])) throw InputError(path.string() + ": duplicate token " + lines[i]);
    vocab.add(lines[i]);
  }
  return vocab;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + '\n';
  return out;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

InputSequence build_input_sequence(const Instance& instance, std::size_t filler_index,
                                   std::string_view placeholder) {
  if (filler_index < 1 || filler_index > kFillersPerInstance) {
    throw InputError("filler index " + std::to_string(filler_index) + " outside 1..5");
  }
  const auto pos = instance.target.find(placeholder);
  if (pos == std::string::npos) {
    throw InputError("instance " + instance.id + " target sentence lacks the placeholder");
  }
  const std::string& filler = instance.fillers[filler_index - 1];
  const std::string separator = " " + std::string(kSepMarker) + " ";

  InputSequence seq;
  seq.text = std::string(pattern_name(instance.pattern)) + separator + instance.title + separator +
             instance.section_header + separator + instance.previous + separator;
  seq.target.begin = seq.text.size();
  seq.filler.begin = seq.text.size() + pos;
  seq.filler.end = seq.filler.begin + filler.size();
  seq.text += instance.target.substr(0, pos) + filler +
              instance.target.substr(pos + placeholder.size());
  seq.target.end = seq.text.size();
  seq.text += separator + instance.followup;
  return seq;
}

Tokenized tokenize(const InputSequence& input, const Vocabulary& vocab, std::size_t max_len) {
  const auto pieces = split_words(input.text);
  std::size_t span_begin = pieces.size(), span_end = 0;
  std::size_t pre_target = 0, post_target = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (p.begin < input.filler.end && p.end > input.filler.begin) {
      span_begin = std::min(span_begin, i);
      span_end = std::max(span_end, i + 1);
    }
    if (p.end <= input.target.begin) ++pre_target;
    if (p.begin >= input.target.end) ++post_target;
  }
  if (span_begin >= span_end) {
    throw InputError("filler maps to no tokens");
  }

  std::size_t lo = 0, hi = pieces.size();
  if (hi - lo > max_len) {
    std::size_t excess = hi - lo - max_len;
    auto take = [&excess](std::size_t available) {
      const std::size_t n = std::min(excess, available);
      excess -= n;
      return n;
    };
    lo += take(pre_target);
    hi -= take(post_target);
    lo += take(span_begin - lo);
    hi -= take(hi - span_end);
    if (excess > 0) {
      throw InputError("filler span of " + std::to_string(span_end - span_begin) +
                       " tokens cannot fit in " + std::to_string(max_len));
    }
  }

  Tokenized out;
  out.truncated = pieces.size() - (hi - lo);
  out.token_ids.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    const int id = pieces[i].text == kSepMarker ? Vocabulary::kSep : vocab.id(pieces[i].text);
    out.token_ids.push_back(id);
    if (i >= span_begin && i < span_end && id == Vocabulary::kUnk) out.span_has_unk = true;
  }
  out.span = SpanIndex{span_begin - lo, span_end - lo};
  return out;
}

std::string example_id(const std::string& instance_id, std::size_t filler_index) {
  return instance_id + "_" + std::to_string(filler_index);
}

std::vector<FilledExample> expand(std::span<const Instance> instances, const Vocabulary& vocab,
                                  std::size_t max_len, const LabelMap* labels,
                                  const ScoreMap* scores, std::string_view placeholder) {
  std::vector<FilledExample> out;
  out.reserve(instances.size() * kFillersPerInstance);
  for (const auto& inst : instances) {
    for (std::size_t f = 1; f <= kFillersPerInstance; ++f) {
      FilledExample ex;
      ex.id = example_id(inst.id, f);
      ex.instance_id = inst.id;
      ex.filler_index = f;
      ex.pattern = inst.pattern;
      ex.filler = inst.fillers[f - 1];
      Tokenized tok;
      try {
        tok = tokenize(build_input_sequence(inst, f, placeholder), vocab, max_len);
      } catch (const InputError& e) {
        throw InputError("example " + ex.id + ": " + e.what());
      }
      ex.token_ids = std::move(tok.token_ids);
      ex.span = tok.span;
      ex.span_has_unk = tok.span_has_unk;
      if (labels != nullptr) {
        const auto it = labels->find(ex.id);
        if (it == labels->end()) throw InputError("no label for example " + ex.id);
        ex.label = it->second;
      }
      if (scores != nullptr) {
        const auto it = scores->find(ex.id);
        if (it == scores->end()) throw InputError("no score for example " + ex.id);
        ex.score = it->second;
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

bool span_round_trips(const FilledExample& example, const Vocabulary& vocab) {
  const std::span<const int> ids(example.token_ids);
  const auto decoded = vocab.decode(ids.subspan(example.span.begin, example.span.length()));
  return decoded == normalized_words(example.filler);
}

std::map<Pattern, std::vector<FilledExample>> split_by_pattern(
    std::span<const FilledExample> examples) {
  std::map<Pattern, std::vector<FilledExample>> groups;
  for (Pattern p : kAllPatterns) groups[p];
  for (const auto& ex : examples) groups[ex.pattern].push_back(ex);
  return groups;
}

}  // namespace clarify
