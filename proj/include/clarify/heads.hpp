#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "clarify/backbone.hpp"
#include "clarify/ops.hpp"
#include "clarify/tensor.hpp"

namespace clarify {

/// Half-open token range [begin, end) of a filler inside a sequence.
struct SpanIndex {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool operator==(const SpanIndex&) const = default;
};

enum class Task { classification, regression };

Task parse_task(std::string_view name);
std::string_view task_name(Task task);

inline constexpr std::size_t kNumClasses = 3;
inline constexpr double kScoreMin = 1.0;
inline constexpr double kScoreMax = 5.0;
/// Regression logits are clamped to +-this before the sigmoid.
inline constexpr double kRegressionLogitBound = 30.0;

/// Projection + activation + layer norm carried over from pre-training:
/// H_p = LN(Act(H_b * W1 + b1)).
class PretrainedHead {
 public:
  PretrainedHead(std::size_t d_model, Activation act, RngStream& init_rng);

  Tensor forward(const Tensor& hidden) const;

  Activation activation() const { return act_; }
  std::size_t d_model() const { return weight_.rows(); }
  ParameterSet parameters(const std::string& prefix = "lm_head.") const;

 private:
  Tensor weight_, bias_, gamma_, beta_;
  Activation act_;
};

/// `head == nullptr` models the "no pre-trained head" ablation: identity.
Tensor lm_head_forward(const PretrainedHead* head, const Tensor& hidden);

/// Mean of hidden rows over the span; empty spans are an InputError.
Tensor span_pool(const Tensor& hidden, SpanIndex span);

/// Task-specific block on the pooled filler representation.
class TaskHead {
 public:
  TaskHead(std::size_t d_model, double dropout_p, RngStream& init_rng);

  /// Dropout -> dense -> tanh -> dropout.
  Tensor enhance(const Tensor& pooled, Mode mode, RngStream* dropout_rng = nullptr) const;
  /// Softmax class distribution, shape [1 x 3], order IMPLAUSIBLE, NEUTRAL, PLAUSIBLE.
  Tensor classify(const Tensor& enhanced) const;
  /// sigmoid(clamped logit) * 4 + 1, shape [1 x 1], strictly inside (1, 5).
  Tensor regress(const Tensor& enhanced) const;

  double dropout_p() const { return dropout_p_; }
  /// Dense block plus the output pair used by `task`.
  ParameterSet parameters(Task task, const std::string& prefix = "task_head.") const;
  ParameterSet all_parameters(const std::string& prefix = "task_head.") const;

 private:
  Tensor dense_w_, dense_b_;
  Tensor cls_w_, cls_b_;
  Tensor reg_w_, reg_b_;
  double dropout_p_;
};

struct ModelConfig {
  BackboneConfig backbone;
  Task task = Task::classification;
  bool lm_head_reuse = true;
  bool freeze_lm_head = false;
  Activation lm_head_activation = Activation::gelu;
  double head_dropout = 0.1;
};

/// Backbone + optional pre-trained head + task head, end to end.
class PlausibilityModel {
 public:
  PlausibilityModel(const ModelConfig& config, RngStream& init_rng);

  /// Class probabilities [1 x 3] or a score [1 x 1] depending on the task.
  Tensor forward(std::span<const int> token_ids, SpanIndex span, Mode mode,
                 RngStream* dropout_rng = nullptr) const;

  const ModelConfig& config() const { return config_; }
  const Encoder& encoder() const { return encoder_; }
  const PretrainedHead* lm_head() const { return lm_head_.get(); }
  const TaskHead& task_head() const { return task_head_; }

  /// Parameters the optimizer updates for the configured task.
  ParameterSet trainable_parameters() const;
  /// Everything persisted in a checkpoint.
  ParameterSet all_parameters() const;

 private:
  ModelConfig config_;
  Encoder encoder_;
  std::unique_ptr<PretrainedHead> lm_head_;
  TaskHead task_head_;
};

}  // namespace clarify
