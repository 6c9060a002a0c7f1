#include "clarify/rtd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clarify/data.hpp"
#include "clarify/errors.hpp"
#include "clarify/text.hpp"
#include "clarify/training.hpp"

namespace clarify {

namespace {

constexpr double kInitStddev = 0.02;

BackboneConfig generator_backbone(const GeneratorConfig& g, std::size_t vocab_size,
                                  std::size_t max_seq_len) {
  BackboneConfig b;
  b.vocab_size = vocab_size;
  b.d_model = g.d_model;
  b.n_layers = g.n_layers;
  b.n_heads = g.n_heads;
  b.d_ff = g.d_ff;
  b.max_seq_len = max_seq_len;
  b.dropout_p = 0.0;
  b.validate();
  return b;
}

std::vector<int> as_ids(std::span<const std::size_t> positions) {
  return {positions.begin(), positions.end()};
}

}  // namespace

UniformSampler::UniformSampler(int low, int high) : low_(low), high_(high) {
  if (low >= high) throw ConfigError("uniform sampler needs low < high");
}

std::vector<int> UniformSampler::sample(std::span<const int>, std::span<const std::size_t> positions,
                                        RngStream& rng) const {
  std::vector<int> out(positions.size());
  for (auto& id : out) id = low_ + static_cast<int>(rng.below(static_cast<std::size_t>(high_ - low_)));
  return out;
}

std::size_t masked_count(std::size_t n, double mask_rate) {
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must be in [0, 1)");
  // The small slack keeps e.g. 0.15 * 20 (= 3.0000000000000004) at 3.
  const double raw = mask_rate * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

CorruptionResult corrupt(std::span<const int> tokens, double mask_rate, const TokenSampler& sampler,
                         RngStream& rng) {
  const std::size_t k = masked_count(tokens.size(), mask_rate);
  CorruptionResult out;
  out.original.assign(tokens.begin(), tokens.end());
  out.corrupted = out.original;
  out.flags.assign(tokens.size(), 1);
  if (k == 0) return out;

  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  out.mask_positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.mask_positions.begin(), out.mask_positions.end());

  std::vector<int> masked = out.original;
  for (auto p : out.mask_positions) masked[p] = Vocabulary::kMask;
  const auto drawn = sampler.sample(masked, out.mask_positions, rng);
  for (std::size_t i = 0; i < k; ++i) {
    const auto p = out.mask_positions[i];
    out.corrupted[p] = drawn[i];
    out.flags[p] = drawn[i] == out.original[p] ? 1 : 0;
  }
  return out;
}

int sample_from_logits(std::span<const double> row, int first_allowed, RngStream& rng) {
  const auto begin = static_cast<std::size_t>(first_allowed);
  if (begin >= row.size()) throw UsageError("sample_from_logits: no allowed ids");
  const double mx = *std::max_element(row.begin() + static_cast<std::ptrdiff_t>(begin), row.end());
  double z = 0.0;
  for (std::size_t j = begin; j < row.size(); ++j) z += std::exp(row[j] - mx);
  double u = rng.uniform() * z;
  for (std::size_t j = begin; j < row.size(); ++j) {
    u -= std::exp(row[j] - mx);
    if (u < 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(row.size() - 1);
}

MlmGenerator::MlmGenerator(const GeneratorConfig& config, std::size_t vocab_size,
                           std::size_t max_seq_len, RngStream& init_rng)
    : config_(config),
      encoder_(generator_backbone(config, vocab_size, max_seq_len), init_rng),
      head_(config.d_model, Activation::gelu, init_rng),
      out_w_(init_normal({config.d_model, vocab_size}, kInitStddev, init_rng)),
      out_b_(init_constant({vocab_size}, 0.0)) {}

Tensor MlmGenerator::logits(std::span<const int> masked, std::span<const std::size_t> positions,
                            Mode mode, RngStream* dropout_rng) const {
  const Tensor hidden = head_.forward(encoder_.encode(masked, mode, dropout_rng));
  const auto rows = as_ids(positions);
  return linear(embedding(hidden, rows), out_w_, out_b_);
}

std::vector<int> MlmGenerator::sample(std::span<const int> masked,
                                      std::span<const std::size_t> positions,
                                      RngStream& rng) const {
  if (positions.empty()) return {};
  const Tensor scores = logits(masked, positions, Mode::eval);
  const std::size_t v = scores.cols();
  std::vector<int> out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out.push_back(sample_from_logits(scores.data().subspan(i * v, v),
                                     static_cast<int>(Vocabulary::kReserved), rng));
  }
  return out;
}

ParameterSet MlmGenerator::parameters(const std::string& prefix) const {
  ParameterSet params = encoder_.parameters(prefix + "encoder.");
  params.append(head_.parameters(prefix + "lm_head."));
  params.add(prefix + "out.weight", out_w_);
  params.add(prefix + "out.bias", out_b_);
  return params;
}

RtdDiscriminator::RtdDiscriminator(const BackboneConfig& backbone, Activation lm_head_activation,
                                   RngStream& init_rng)
    : encoder_(backbone, init_rng),
      lm_head_(backbone.d_model, lm_head_activation, init_rng),
      rtd_w_(init_normal({backbone.d_model, 1}, kInitStddev, init_rng)),
      rtd_b_(init_constant({1}, 0.0)) {}

Tensor RtdDiscriminator::logits(std::span<const int> tokens, Mode mode,
                                RngStream* dropout_rng) const {
  return linear(lm_head_.forward(encoder_.encode(tokens, mode, dropout_rng)), rtd_w_, rtd_b_);
}

Tensor RtdDiscriminator::probabilities(std::span<const int> tokens) const {
  return activation(logits(tokens, Mode::eval), Activation::sigmoid);
}

ParameterSet RtdDiscriminator::parameters() const {
  ParameterSet params = encoder_.parameters("backbone.");
  params.append(lm_head_.parameters("lm_head."));
  params.add("rtd_head.weight", rtd_w_);
  params.add("rtd_head.bias", rtd_b_);
  return params;
}

BackboneConfig default_pretrain_backbone() {
  BackboneConfig config;
  config.dropout_p = 0.0;
  return config;
}

void PretrainConfig::validate() const {
  backbone.validate();
  generator_backbone(generator, backbone.vocab_size, backbone.max_seq_len);
  masked_count(0, mask_rate);
  if (steps == 0) throw ConfigError("pretrain steps must be positive");
  if (batch_size == 0) throw ConfigError("pretrain batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain learning_rate must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ConfigError("pretrain warmup_ratio must be in [0, 1)");
  }
  if (!(rtd_weight > 0.0)) throw ConfigError("rtd_weight must be positive");
  if (backbone.vocab_size <= Vocabulary::kReserved) {
    throw ConfigError("vocabulary holds only reserved tokens");
  }
}

RtdScore score_rtd(const RtdDiscriminator& discriminator,
                   std::span<const CorruptionResult> corrupted) {
  RtdScore score;
  std::size_t hits = 0;
  double loss = 0.0;
  for (const auto& c : corrupted) {
    const Tensor z = discriminator.logits(c.corrupted, Mode::eval);
    loss += rtd_loss_with_logits(z, c.flags).item();
    for (std::size_t i = 0; i < c.flags.size(); ++i) {
      const bool says_original = z[i] >= 0.0;
      hits += says_original == (c.flags[i] == 1) ? 1 : 0;
    }
    score.tokens += c.flags.size();
  }
  if (score.tokens == 0) throw InputError("no held-out tokens to score");
  score.accuracy = static_cast<double>(hits) / static_cast<double>(score.tokens);
  score.loss = loss / static_cast<double>(score.tokens);
  return score;
}

namespace {

void check_corpus(const std::vector<std::vector<int>>& corpus, const BackboneConfig& backbone) {
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (corpus[s].empty()) throw InputError("corpus sentence " + std::to_string(s) + " is empty");
    if (corpus[s].size() > backbone.max_seq_len) {
      throw InputError("corpus sentence " + std::to_string(s) + " has " +
                       std::to_string(corpus[s].size()) + " tokens, above max_seq_len " +
                       std::to_string(backbone.max_seq_len));
    }
    for (int id : corpus[s]) {
      if (id < 0 || static_cast<std::size_t>(id) >= backbone.vocab_size) {
        throw InputError("corpus sentence " + std::to_string(s) + " has id " + std::to_string(id) +
                         " outside the vocabulary");
      }
    }
  }
}

}  // namespace

PretrainResult pretrain(const std::vector<std::vector<int>>& corpus, const PretrainConfig& config,
                        const std::string& config_hash) {
  config.validate();
  check_corpus(corpus, config.backbone);
  if (corpus.size() <= config.heldout_sentences) {
    throw InputError("corpus has " + std::to_string(corpus.size()) +
                     " sentences; need more than the " + std::to_string(config.heldout_sentences) +
                     " held out");
  }
  const std::size_t n_train = corpus.size() - config.heldout_sentences;

  // Two draws from the same stream name give identical initial weights; the
  // untouched copy is scored as the step-0 reference.
  RngStream disc_init(config.seed, "pretrain.discriminator.init");
  RtdDiscriminator discriminator(config.backbone, config.lm_head_activation, disc_init);
  RngStream disc_init_again(config.seed, "pretrain.discriminator.init");
  const RtdDiscriminator initial(config.backbone, config.lm_head_activation, disc_init_again);
  RngStream gen_init(config.seed, "pretrain.generator.init");
  MlmGenerator generator(config.generator, config.backbone.vocab_size, config.backbone.max_seq_len,
                         gen_init);

  AdamWConfig opt_config;
  opt_config.weight_decay = config.weight_decay;
  const ParameterSet disc_params = discriminator.parameters();
  const ParameterSet gen_params = generator.parameters();
  AdamW disc_opt(disc_params, opt_config);
  AdamW gen_opt(gen_params, opt_config);

  RngStream batch_rng(config.seed, "pretrain.batches");
  RngStream mask_rng(config.seed, "pretrain.masking");
  RngStream dropout_rng(config.seed, "pretrain.dropout");

  PretrainResult result;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    disc_params.zero_grad();
    gen_params.zero_grad();
    double mlm_sum = 0.0, rtd_sum = 0.0;
    std::size_t n_masked = 0, n_tokens = 0;
    {
      GradientTape tape;
      std::vector<Tensor> mlm_losses, rtd_losses;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const auto& sentence = corpus[batch_rng.below(n_train)];
        const std::size_t k = masked_count(sentence.size(), config.mask_rate);
        std::vector<std::size_t> order(sentence.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) {
          std::swap(order[i], order[i + mask_rng.below(order.size() - i)]);
        }
        std::vector<std::size_t> positions(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(positions.begin(), positions.end());

        std::vector<int> masked = sentence;
        for (auto p : positions) masked[p] = Vocabulary::kMask;
        std::vector<int> corrupted = sentence;
        std::vector<std::uint8_t> flags(sentence.size(), 1);
        if (k > 0) {
          const Tensor gen_logits = generator.logits(masked, positions, Mode::train, &dropout_rng);
          std::vector<int> targets;
          for (auto p : positions) targets.push_back(sentence[p]);
          mlm_losses.push_back(cross_entropy_logits(gen_logits, targets));
          // Samples are plain ids: no gradient flows from the discriminator
          // back into the generator.
          const std::size_t v = gen_logits.cols();
          for (std::size_t i = 0; i < k; ++i) {
            const int id = sample_from_logits(gen_logits.data().subspan(i * v, v),
                                              static_cast<int>(Vocabulary::kReserved), mask_rng);
            corrupted[positions[i]] = id;
            flags[positions[i]] = id == sentence[positions[i]] ? 1 : 0;
          }
          n_masked += k;
        }
        rtd_losses.push_back(
            rtd_loss_with_logits(discriminator.logits(corrupted, Mode::train, &dropout_rng), flags));
        n_tokens += sentence.size();
      }

      Tensor rtd_total = sum(concat_rows(rtd_losses));
      rtd_sum = rtd_total.item();
      Tensor objective = affine(rtd_total, config.rtd_weight / static_cast<double>(n_tokens), 0.0);
      if (!mlm_losses.empty()) {
        Tensor mlm_total = sum(concat_rows(mlm_losses));
        mlm_sum = mlm_total.item();
        objective = add(objective, affine(mlm_total, 1.0 / static_cast<double>(n_masked), 0.0));
      }
      tape.backward(objective);
    }
    if (!std::isfinite(mlm_sum) || !std::isfinite(rtd_sum)) {
      throw NumericError("pretraining diverged at step " + std::to_string(step));
    }
    if (config.clip_norm > 0.0) {
      clip_grad_norm(disc_params, config.clip_norm);
      clip_grad_norm(gen_params, config.clip_norm);
    }
    const double lr = lr_at(static_cast<double>(step) - 0.5, config.steps, config.learning_rate,
                            config.warmup_ratio);
    disc_opt.step(lr);
    gen_opt.step(lr);

    const double mlm_mean = n_masked > 0 ? mlm_sum / static_cast<double>(n_masked) : 0.0;
    const double rtd_mean = rtd_sum / static_cast<double>(n_tokens);
    result.log += std::to_string(step) + "\t" + format_double(lr) + "\t" +
                  format_double(mlm_mean + config.rtd_weight * rtd_mean) + "\t" +
                  format_double(mlm_mean) + "\t" + format_double(rtd_mean) + "\n";
  }

  // One fixed corruption of the held-out slice, drawn from the final generator.
  RngStream heldout_rng(config.seed, "pretrain.heldout");
  std::vector<CorruptionResult> heldout;
  std::size_t originals = 0, total = 0;
  for (std::size_t s = n_train; s < corpus.size(); ++s) {
    heldout.push_back(corrupt(corpus[s], config.mask_rate, generator, heldout_rng));
    for (auto f : heldout.back().flags) originals += f;
    total += heldout.back().flags.size();
  }
  auto& report = result.report;
  report.initial = score_rtd(initial, heldout);
  report.final = score_rtd(discriminator, heldout);
  const double q = static_cast<double>(originals) / static_cast<double>(total);
  report.replaced_fraction = 1.0 - q;
  report.majority_accuracy = std::max(q, 1.0 - q);
  report.majority_loss = (q <= 0.0 || q >= 1.0) ? 0.0 : -(q * std::log(q) + (1.0 - q) * std::log1p(-q));

  Checkpoint& ckpt = result.checkpoint;
  write_backbone_header(ckpt.header, config.backbone);
  ckpt.header["kind"] = "rtd";
  ckpt.header["lm_head_activation"] = std::string(activation_name(config.lm_head_activation));
  ckpt.header["mask_rate"] = format_double(config.mask_rate);
  ckpt.header["steps"] = std::to_string(config.steps);
  ckpt.header["seed"] = std::to_string(config.seed);
  ckpt.header["config_hash"] = config_hash;
  ckpt.header["generator.d_model"] = std::to_string(config.generator.d_model);
  ckpt.header["generator.n_layers"] = std::to_string(config.generator.n_layers);
  ckpt.header["generator.n_heads"] = std::to_string(config.generator.n_heads);
  ckpt.header["generator.d_ff"] = std::to_string(config.generator.d_ff);
  ckpt.arrays = capture_parameters(disc_params);
  for (auto& a : capture_parameters(gen_params)) ckpt.arrays.push_back(std::move(a));
  return result;
}

RtdDiscriminator discriminator_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.get("kind") != "rtd") {
    throw CheckpointError("expected an RTD checkpoint, got kind '" + checkpoint.get("kind") + "'");
  }
  const BackboneConfig backbone = backbone_from_header(checkpoint);
  RngStream init_rng(0, "checkpoint.restore");
  RtdDiscriminator discriminator(backbone, parse_activation(checkpoint.get("lm_head_activation")),
                                 init_rng);
  restore_parameters(discriminator.parameters(), checkpoint,
                     std::vector<std::string>{"backbone.", "lm_head.", "rtd_head."});
  return discriminator;
}

}  // namespace clarify
