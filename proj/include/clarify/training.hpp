#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clarify/checkpoint.hpp"
#include "clarify/data.hpp"
#include "clarify/heads.hpp"
#include "clarify/tensor.hpp"

namespace clarify {

/// Sum over rows of -log probs[i][gold[i]]. Gold probabilities below 1e-12
/// are clamped there and reported through `clamped` (and stderr).
Tensor classification_loss(const Tensor& probs, std::span<const Label> gold,
                           std::size_t* clamped = nullptr);
/// Mean squared error between a [n x 1] (or [n]) prediction and gold.
Tensor regression_loss(const Tensor& predicted, std::span<const double> gold);
/// Sum over tokens of -log p(flag), where probs holds p(original). Any
/// probability outside (0, 1) is a NumericError.
Tensor rtd_loss(const Tensor& probs, std::span<const std::uint8_t> flags);
/// The same loss computed from pre-sigmoid logits, stable for saturated
/// predictions. Used for training.
Tensor rtd_loss_with_logits(const Tensor& logits, std::span<const std::uint8_t> flags);
/// Sum over rows of -log softmax(logits[i])[target[i]].
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets);

/// Linear warmup from 0 to `peak` over warmup_ratio * total_steps, then
/// linear decay to 0 at total_steps. `step` may be fractional.
double lr_at(double step, std::size_t total_steps, double peak, double warmup_ratio);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(ParameterSet params, AdamWConfig config = {});

  /// p *= (1 - lr * wd), then the bias-corrected Adam update. Parameters
  /// that received no gradient are left untouched and keep their moments.
  void step(double lr);
  std::size_t steps() const { return step_; }
  const ParameterSet& parameters() const { return params_; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParameterSet params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(const ParameterSet& params, double max_norm);

inline constexpr std::array<double, 4> kLearningRateGrid = {5e-6, 7e-6, 9e-6, 1e-5};
inline constexpr std::array<std::size_t, 3> kBatchSizeGrid = {32, 48, 64};

struct TrainConfig {
  Task task = Task::classification;
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double warmup_ratio = 0.1;
  double weight_decay = 0.01;
  double dropout_p = 0.1;
  std::uint64_t seed = 42;
  bool lm_head_reuse = true;
  bool freeze_lm_head = false;
  /// Global gradient-norm bound; 0 disables clipping.
  double clip_norm = 1.0;

  void validate() const;
};

/// Table-style run name, e.g. "LR:9e-6, BSZ:32".
std::string run_label(double learning_rate, std::size_t batch_size);
/// Filesystem-safe run name, e.g. "LR9e-6_BSZ32".
std::string run_dir_name(double learning_rate, std::size_t batch_size);

/// Probability rows [n x 3] or scores [n] from an eval-mode pass.
struct Predictions {
  Task task = Task::classification;
  std::vector<std::string> ids;
  std::vector<std::array<double, 3>> probs;
  std::vector<double> scores;
};

Predictions predict(const PlausibilityModel& model, std::span<const FilledExample> examples);

/// Accuracy (argmax) or Spearman against the examples' gold annotations.
double dev_metric(const Predictions& predictions, std::span<const FilledExample> examples);

/// Forward + backward + optimizer step on one batch; returns the summed loss
/// over the batch (the optimizer sees the mean).
double train_batch(const PlausibilityModel& model, std::span<const FilledExample> batch,
                   AdamW& optimizer, double lr, const TrainConfig& config,
                   RngStream* dropout_rng);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_train_loss = 0.0;
  /// NaN when undefined (e.g. constant predicted scores).
  double dev_metric = 0.0;
};

struct FinetuneResult {
  std::unique_ptr<PlausibilityModel> model;  // best-epoch parameters
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
  std::string log;  // per-step and per-epoch lines
};

/// Builds a model (architecture from `pretrained` when given, otherwise
/// `architecture`), loads backbone and, if reused, LM-head weights, trains
/// the task head end to end and restores the best-dev epoch.
FinetuneResult finetune(const Checkpoint* pretrained, const BackboneConfig& architecture,
                        std::span<const FilledExample> train, std::span<const FilledExample> dev,
                        const TrainConfig& config);

ModelConfig model_config_for(const BackboneConfig& architecture, const TrainConfig& config);

/// Fine-tuned checkpoint; header records task, head options and config hash.
Checkpoint make_plausibility_checkpoint(const PlausibilityModel& model, const TrainConfig& config,
                                        const std::string& config_hash);
/// Rebuilds a model from a fine-tuned checkpoint.
std::unique_ptr<PlausibilityModel> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace clarify
