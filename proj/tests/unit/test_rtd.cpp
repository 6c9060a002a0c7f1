#include <doctest.h>

#include <cmath>
#include <set>

#include "clarify/errors.hpp"
#include "clarify/rtd.hpp"
#include "clarify/synthetic.hpp"
#include "clarify/training.hpp"

using namespace clarify;

namespace {

std::vector<int> iota_tokens(std::size_t n) {
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<int>(4 + i % 100);
  return t;
}

struct SmallCorpus {
  std::vector<std::vector<int>> sentences;
  std::size_t vocab_size = 0;
};

SmallCorpus small_corpus() {
  const Lexicon lexicon(GrammarConfig{});
  SyntheticCorpusConfig cc;
  cc.n_sentences = 200;
  cc.max_len = 16;
  const auto words = generate_corpus_words(cc, lexicon);
  const auto vocab = Vocabulary::build(vocabulary_texts(words, {}), cc.vocab_size);
  return {generate_corpus(cc, lexicon, vocab), vocab.size()};
}

PretrainConfig small_pretrain(std::size_t vocab_size) {
  PretrainConfig c;
  c.backbone.vocab_size = vocab_size;
  c.backbone.d_model = 16;
  c.backbone.n_heads = 2;
  c.backbone.n_layers = 1;
  c.backbone.d_ff = 32;
  c.backbone.max_seq_len = 16;
  c.backbone.dropout_p = 0.0;
  c.generator = GeneratorConfig{16, 1, 2, 32};
  c.steps = 60;
  c.batch_size = 8;
  c.learning_rate = 3e-3;
  c.heldout_sentences = 40;
  return c;
}

}  // namespace

TEST_CASE("masked count is the ceiling of rate times length") {
  CHECK(masked_count(20, 0.15) == 3);
  CHECK(masked_count(10, 0.15) == 2);
  CHECK(masked_count(100, 0.15) == 15);
  CHECK(masked_count(7, 0.0) == 0);
  CHECK(masked_count(1, 0.15) == 1);
  CHECK_THROWS_AS(masked_count(10, 1.0), ConfigError);
  CHECK_THROWS_AS(masked_count(10, -0.1), ConfigError);
}

TEST_CASE("corruption with mask rate zero is the identity") {
  RngStream rng(1, "c");
  const UniformSampler sampler(4, 512);
  const auto tokens = iota_tokens(30);
  const auto r = corrupt(tokens, 0.0, sampler, rng);
  CHECK(r.corrupted == tokens);
  CHECK(std::all_of(r.flags.begin(), r.flags.end(), [](std::uint8_t f) { return f == 1; }));
  CHECK(r.mask_positions.empty());
}

TEST_CASE("flags mark exactly the positions that changed") {
  const UniformSampler sampler(4, 8);  // small range, so same-token draws happen
  std::size_t sampled_same = 0;
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(seed, "flags");
    const auto tokens = iota_tokens(25);
    const auto r = corrupt(tokens, 0.3, sampler, rng);
    REQUIRE(r.mask_positions.size() == masked_count(25, 0.3));
    CHECK(std::is_sorted(r.mask_positions.begin(), r.mask_positions.end()));
    const std::set<std::size_t> selected(r.mask_positions.begin(), r.mask_positions.end());
    CHECK(selected.size() == r.mask_positions.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      CHECK(r.flags[i] == (r.corrupted[i] == tokens[i] ? 1 : 0));
      if (r.flags[i] == 0) CHECK(selected.count(i) == 1);
      if (selected.count(i) == 1 && r.flags[i] == 1) ++sampled_same;
    }
  }
  CHECK(sampled_same > 0);
}

TEST_CASE("uniform generator replaces mask_rate * (1 - 1/512) of tokens") {
  const UniformSampler sampler(0, 512);
  RngStream rng(42, "monte-carlo");
  std::size_t tokens = 0, replaced = 0;
  while (tokens < 100000) {
    std::vector<int> seq(100);
    for (auto& t : seq) t = static_cast<int>(rng.below(512));
    const auto r = corrupt(seq, 0.15, sampler, rng);
    for (auto f : r.flags) replaced += f == 0 ? 1 : 0;
    tokens += seq.size();
  }
  const double expected = 0.15 * (1.0 - 1.0 / 512.0);
  const double observed = static_cast<double>(replaced) / static_cast<double>(tokens);
  CHECK(std::abs(observed - expected) / expected < 0.02);
}

TEST_CASE("rtd loss against a hand-summed cross-entropy") {
  RngStream rng(5, "bce");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<double> p(n);
    std::vector<std::uint8_t> flags(n);
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = 0.001 + 0.998 * rng.uniform();
      flags[i] = rng.below(2) == 0 ? 1 : 0;
      expected += flags[i] == 1 ? -std::log(p[i]) : -std::log(1.0 - p[i]);
    }
    const double loss = rtd_loss(Tensor({n, 1}, p), flags).item();
    CHECK(std::abs(loss - expected) <= 1e-12 * std::max(1.0, expected));
  }
}

TEST_CASE("rtd loss analytic cases") {
  const std::size_t n = 12;
  std::vector<std::uint8_t> flags(n);
  for (std::size_t i = 0; i < n; ++i) flags[i] = i % 3 == 0 ? 0 : 1;
  const double half = rtd_loss(Tensor({n, 1}, std::vector<double>(n, 0.5)), flags).item();
  CHECK(half == doctest::Approx(n * std::log(2.0)).epsilon(1e-14));

  std::vector<double> perfect(n);
  for (std::size_t i = 0; i < n; ++i) perfect[i] = flags[i] == 1 ? 1.0 - 1e-12 : 1e-12;
  CHECK(rtd_loss(Tensor({n, 1}, perfect), flags).item() / n < 1e-6);
  CHECK_THROWS_AS(rtd_loss(Tensor({1, 1}, {0.0}), std::vector<std::uint8_t>{1}), NumericError);
}

TEST_CASE("generator samples never use reserved ids") {
  RngStream init(3, "gen");
  const MlmGenerator gen(GeneratorConfig{16, 1, 2, 32}, 40, 16, init);
  std::vector<int> seq = {5, 6, Vocabulary::kMask, 8, Vocabulary::kMask};
  const std::vector<std::size_t> pos = {2, 4};
  CHECK(gen.logits(seq, pos, Mode::eval).shape() == Shape{2, 40});
  RngStream rng(4, "sample");
  for (int i = 0; i < 500; ++i) {
    for (int id : gen.sample(seq, pos, rng)) {
      CHECK(id >= static_cast<int>(Vocabulary::kReserved));
      CHECK(id < 40);
    }
  }
}

TEST_CASE("sampling from logits follows the softmax") {
  const std::vector<double> row = {50.0, 0.0, std::log(1.0), std::log(3.0)};
  RngStream rng(8, "draw");
  std::size_t threes = 0;
  for (int i = 0; i < 20000; ++i) {
    const int id = sample_from_logits(row, 2, rng);
    REQUIRE(id >= 2);
    threes += id == 3 ? 1 : 0;
  }
  CHECK(static_cast<double>(threes) / 20000.0 == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("pre-training lowers held-out loss and is bit-reproducible") {
  const auto corpus = small_corpus();
  const auto cfg = small_pretrain(corpus.vocab_size);
  const auto a = pretrain(corpus.sentences, cfg, "h");
  const auto b = pretrain(corpus.sentences, cfg, "h");
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
  CHECK(a.log == b.log);
  CHECK(a.report.final.loss < a.report.initial.loss);
  CHECK(a.checkpoint.get("kind") == "rtd");
  CHECK(a.checkpoint.find("backbone.tok_emb") != nullptr);
  CHECK(a.checkpoint.find("lm_head.dense.weight") != nullptr);
  CHECK(a.checkpoint.find("rtd_head.weight") != nullptr);

  const auto disc = discriminator_from_checkpoint(a.checkpoint);
  std::vector<CorruptionResult> fixed;
  RngStream rng(1, "score");
  const UniformSampler sampler(4, static_cast<int>(corpus.vocab_size));
  for (std::size_t i = 0; i < 20; ++i) fixed.push_back(corrupt(corpus.sentences[i], 0.15, sampler, rng));
  const auto s = score_rtd(disc, fixed);
  CHECK(s.tokens > 0);
  CHECK(s.accuracy >= 0.0);
  CHECK(s.accuracy <= 1.0);
}

TEST_CASE("pre-training config validation") {
  PretrainConfig c = small_pretrain(100);
  c.mask_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_pretrain(100);
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
