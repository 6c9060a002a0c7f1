#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clarify/backbone.hpp"
#include "clarify/checkpoint.hpp"
#include "clarify/heads.hpp"
#include "clarify/rng.hpp"

namespace clarify {

struct CorruptionResult {
  std::vector<int> corrupted;
  std::vector<int> original;
  /// 1 where corrupted[i] == original[i], including sampled-same tokens.
  std::vector<std::uint8_t> flags;
  std::vector<std::size_t> mask_positions;  // ascending
};

/// Proposes replacement tokens for masked positions.
class TokenSampler {
 public:
  virtual ~TokenSampler() = default;
  /// `masked` holds the sequence with positions already set to [MASK].
  /// Returns one sampled id per position.
  virtual std::vector<int> sample(std::span<const int> masked,
                                  std::span<const std::size_t> positions,
                                  RngStream& rng) const = 0;
};

/// Uniform over ids [low, high).
class UniformSampler : public TokenSampler {
 public:
  UniformSampler(int low, int high);
  std::vector<int> sample(std::span<const int> masked, std::span<const std::size_t> positions,
                          RngStream& rng) const override;

 private:
  int low_, high_;
};

/// Number of positions selected for a sequence of length n.
std::size_t masked_count(std::size_t n, double mask_rate);

/// Selects masked_count(n) distinct positions uniformly, replaces each with
/// a sampler draw and records flags.
CorruptionResult corrupt(std::span<const int> tokens, double mask_rate, const TokenSampler& sampler,
                         RngStream& rng);

struct GeneratorConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 1;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
};

/// Small masked language model: its own encoder, an LM head and a
/// projection onto the vocabulary. Sampling never proposes reserved ids.
class MlmGenerator : public TokenSampler {
 public:
  MlmGenerator(const GeneratorConfig& config, std::size_t vocab_size, std::size_t max_seq_len,
               RngStream& init_rng);

  /// Vocabulary logits at `positions`, shape [k x vocab].
  Tensor logits(std::span<const int> masked, std::span<const std::size_t> positions, Mode mode,
                RngStream* dropout_rng = nullptr) const;
  std::vector<int> sample(std::span<const int> masked, std::span<const std::size_t> positions,
                          RngStream& rng) const override;

  ParameterSet parameters(const std::string& prefix = "generator.") const;
  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  Encoder encoder_;
  PretrainedHead head_;
  Tensor out_w_, out_b_;
};

/// Draws from softmax(row) restricted to ids >= first_allowed.
int sample_from_logits(std::span<const double> row, int first_allowed, RngStream& rng);

/// Backbone -> LM head -> linear(d -> 1); sigmoid of the output is the
/// probability that a token is original.
class RtdDiscriminator {
 public:
  RtdDiscriminator(const BackboneConfig& backbone, Activation lm_head_activation,
                   RngStream& init_rng);

  /// Pre-sigmoid scores, shape [n x 1].
  Tensor logits(std::span<const int> tokens, Mode mode, RngStream* dropout_rng = nullptr) const;
  /// sigmoid(logits), shape [n x 1].
  Tensor probabilities(std::span<const int> tokens) const;

  const Encoder& encoder() const { return encoder_; }
  const PretrainedHead& lm_head() const { return lm_head_; }
  /// backbone.*, lm_head.*, rtd_head.*
  ParameterSet parameters() const;

 private:
  Encoder encoder_;
  PretrainedHead lm_head_;
  Tensor rtd_w_, rtd_b_;
};

/// Backbone defaults for pre-training: the shared architecture without
/// dropout, which only slowed convergence on the synthetic corpus.
BackboneConfig default_pretrain_backbone();

struct PretrainConfig {
  BackboneConfig backbone = default_pretrain_backbone();
  GeneratorConfig generator;
  Activation lm_head_activation = Activation::gelu;
  double mask_rate = 0.15;
  std::size_t steps = 2500;
  std::size_t batch_size = 32;
  double learning_rate = 2e-3;
  double warmup_ratio = 0.1;
  double weight_decay = 0.01;
  /// Weight of the discriminator loss relative to the MLM loss.
  double rtd_weight = 50.0;
  double clip_norm = 1.0;
  std::size_t heldout_sentences = 500;
  std::uint64_t seed = 42;

  void validate() const;
};

struct RtdScore {
  std::size_t tokens = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // mean per token
};

struct PretrainReport {
  RtdScore initial;  // untrained discriminator
  RtdScore final;
  /// Constant predictor at the held-out original-flag rate.
  double majority_accuracy = 0.0;
  double majority_loss = 0.0;  // mean per token
  double replaced_fraction = 0.0;
};

struct PretrainResult {
  Checkpoint checkpoint;
  PretrainReport report;
  std::string log;  // step, lr, loss, mlm loss, rtd loss
};

/// Scores a discriminator on fixed corrupted sequences.
RtdScore score_rtd(const RtdDiscriminator& discriminator,
                   std::span<const CorruptionResult> corrupted);

/// Trains generator and discriminator jointly on all but the last
/// `heldout_sentences` sentences, then scores the initial and final
/// discriminators on one fixed corruption of the held-out slice.
PretrainResult pretrain(const std::vector<std::vector<int>>& corpus, const PretrainConfig& config,
                        const std::string& config_hash);

/// Rebuilds the discriminator stored in an RTD checkpoint.
RtdDiscriminator discriminator_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace clarify
