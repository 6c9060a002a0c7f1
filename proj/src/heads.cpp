#include "clarify/heads.hpp"

#include <string>

#include "clarify/errors.hpp"

namespace clarify {

namespace {
constexpr double kHeadInitStddev = 0.02;
}

Task parse_task(std::string_view name) {
  if (name == "classification" || name == "A") return Task::classification;
  if (name == "regression" || name == "B") return Task::regression;
  throw ConfigError("unknown task: " + std::string(name));
}

std::string_view task_name(Task task) {
  return task == Task::classification ? "classification" : "regression";
}

PretrainedHead::PretrainedHead(std::size_t d_model, Activation act, RngStream& init_rng)
    : weight_(init_normal({d_model, d_model}, kHeadInitStddev, init_rng)),
      bias_(init_constant({d_model}, 0.0)),
      gamma_(init_constant({d_model}, 1.0)),
      beta_(init_constant({d_model}, 0.0)),
      act_(act) {}

Tensor PretrainedHead::forward(const Tensor& hidden) const {
  if (hidden.cols() != d_model()) {
    throw ShapeError("lm head expects width " + std::to_string(d_model()) + ", got " +
                     std::to_string(hidden.cols()));
  }
  return layer_norm(clarify::activation(linear(hidden, weight_, bias_), act_), gamma_, beta_);
}

ParameterSet PretrainedHead::parameters(const std::string& prefix) const {
  ParameterSet params;
  params.add(prefix + "dense.weight", weight_);
  params.add(prefix + "dense.bias", bias_);
  params.add(prefix + "ln.gamma", gamma_);
  params.add(prefix + "ln.beta", beta_);
  return params;
}

Tensor lm_head_forward(const PretrainedHead* head, const Tensor& hidden) {
  return head == nullptr ? hidden : head->forward(hidden);
}

Tensor span_pool(const Tensor& hidden, SpanIndex span) {
  return span_mean(hidden, span.begin, span.end);
}

TaskHead::TaskHead(std::size_t d_model, double dropout_p, RngStream& init_rng)
    : dense_w_(init_normal({d_model, d_model}, kHeadInitStddev, init_rng)),
      dense_b_(init_constant({d_model}, 0.0)),
      cls_w_(init_normal({d_model, kNumClasses}, kHeadInitStddev, init_rng)),
      cls_b_(init_constant({kNumClasses}, 0.0)),
      reg_w_(init_normal({d_model, 1}, kHeadInitStddev, init_rng)),
      reg_b_(init_constant({1}, 0.0)),
      dropout_p_(dropout_p) {
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("head dropout must be in [0, 1)");
  }
}

Tensor TaskHead::enhance(const Tensor& pooled, Mode mode, RngStream* dropout_rng) const {
  if (mode == Mode::train && dropout_p_ > 0.0 && dropout_rng == nullptr) {
    throw UsageError("train-mode enhance needs a dropout stream");
  }
  auto drop = [&](const Tensor& t) {
    return mode == Mode::train && dropout_p_ > 0.0 ? dropout(t, dropout_p_, mode, *dropout_rng) : t;
  };
  return drop(activation(linear(drop(pooled), dense_w_, dense_b_), Activation::tanh));
}

Tensor TaskHead::classify(const Tensor& enhanced) const {
  return softmax(linear(enhanced, cls_w_, cls_b_), 1);
}

Tensor TaskHead::regress(const Tensor& enhanced) const {
  // sigmoid rounds to exactly 0 or 1 past |x| ~ 37, which would put the
  // score on the closed bounds. At 30 the output stays 4e-13 inside.
  const Tensor logit = clamp(linear(enhanced, reg_w_, reg_b_), -kRegressionLogitBound,
                             kRegressionLogitBound);
  const Tensor unit = activation(logit, Activation::sigmoid);
  return affine(unit, kScoreMax - kScoreMin, kScoreMin);
}

ParameterSet TaskHead::parameters(Task task, const std::string& prefix) const {
  ParameterSet params;
  params.add(prefix + "dense.weight", dense_w_);
  params.add(prefix + "dense.bias", dense_b_);
  if (task == Task::classification) {
    params.add(prefix + "cls.weight", cls_w_);
    params.add(prefix + "cls.bias", cls_b_);
  } else {
    params.add(prefix + "reg.weight", reg_w_);
    params.add(prefix + "reg.bias", reg_b_);
  }
  return params;
}

ParameterSet TaskHead::all_parameters(const std::string& prefix) const {
  ParameterSet params;
  params.add(prefix + "dense.weight", dense_w_);
  params.add(prefix + "dense.bias", dense_b_);
  params.add(prefix + "cls.weight", cls_w_);
  params.add(prefix + "cls.bias", cls_b_);
  params.add(prefix + "reg.weight", reg_w_);
  params.add(prefix + "reg.bias", reg_b_);
  return params;
}

namespace {
std::unique_ptr<PretrainedHead> make_lm_head(const ModelConfig& config, RngStream& rng) {
  if (!config.lm_head_reuse) return nullptr;
  return std::make_unique<PretrainedHead>(config.backbone.d_model, config.lm_head_activation, rng);
}
}  // namespace

// Member order fixes the order parameters are drawn from init_rng.
PlausibilityModel::PlausibilityModel(const ModelConfig& config, RngStream& init_rng)
    : config_(config),
      encoder_(config.backbone, init_rng),
      lm_head_(make_lm_head(config, init_rng)),
      task_head_(config.backbone.d_model, config.head_dropout, init_rng) {
  if (lm_head_ && config_.freeze_lm_head) {
    for (const auto& p : lm_head_->parameters().items()) {
      Tensor handle = p.tensor;
      handle.set_requires_grad(false);
    }
  }
}

Tensor PlausibilityModel::forward(std::span<const int> token_ids, SpanIndex span, Mode mode,
                                  RngStream* dropout_rng) const {
  if (span.begin >= span.end || span.end > token_ids.size()) {
    throw InputError("invalid filler span [" + std::to_string(span.begin) + ", " +
                     std::to_string(span.end) + ") for " + std::to_string(token_ids.size()) +
                     " tokens");
  }
  const Tensor hidden = encoder_.encode(token_ids, mode, dropout_rng);
  const Tensor projected = lm_head_forward(lm_head_.get(), hidden);
  const Tensor enhanced = task_head_.enhance(span_pool(projected, span), mode, dropout_rng);
  return config_.task == Task::classification ? task_head_.classify(enhanced)
                                              : task_head_.regress(enhanced);
}

ParameterSet PlausibilityModel::trainable_parameters() const {
  ParameterSet params = encoder_.parameters();
  if (lm_head_ && !config_.freeze_lm_head) params.append(lm_head_->parameters());
  params.append(task_head_.parameters(config_.task));
  return params;
}

ParameterSet PlausibilityModel::all_parameters() const {
  ParameterSet params = encoder_.parameters();
  if (lm_head_) params.append(lm_head_->parameters());
  params.append(task_head_.all_parameters());
  return params;
}

}  // namespace clarify
