#include "clarify/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "clarify/errors.hpp"
#include "clarify/evaluation.hpp"
#include "clarify/ops.hpp"
#include "clarify/text.hpp"

namespace clarify {

namespace {

constexpr double kProbFloor = 1e-12;

void require_rows(const Tensor& t, std::size_t n, std::size_t cols, const char* op) {
  if (t.rows() != n || t.cols() != cols) {
    throw ShapeError(std::string(op) + ": expected [" + std::to_string(n) + " x " +
                     std::to_string(cols) + "], got " + shape_string(t.shape()));
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor classification_loss(const Tensor& probs, std::span<const Label> gold,
                           std::size_t* clamped) {
  require_rows(probs, gold.size(), kNumClasses, "classification_loss");
  double total = 0.0;
  std::size_t n_clamped = 0;
  std::vector<double> used(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double p = probs.at(i, static_cast<std::size_t>(gold[i]));
    used[i] = std::max(p, kProbFloor);
    n_clamped += p < kProbFloor ? 1 : 0;
    total -= std::log(used[i]);
  }
  if (n_clamped > 0) {
    std::cerr << "warning: " << n_clamped << " gold-class probabilities clamped at 1e-12\n";
  }
  if (clamped != nullptr) *clamped = n_clamped;
  std::vector<std::size_t> cls;
  for (Label g : gold) cls.push_back(static_cast<std::size_t>(g));
  return autograd::make_result(
      "classification_loss", Shape{1}, {total}, autograd::should_record({&probs}),
      [probs, cls, used](std::span<const double> g) {
        auto sink = autograd::grad_sink(probs);
        for (std::size_t i = 0; i < cls.size(); ++i) sink[i * kNumClasses + cls[i]] -= g[0] / used[i];
      });
}

Tensor regression_loss(const Tensor& predicted, std::span<const double> gold) {
  if (predicted.size() != gold.size() || gold.empty()) {
    throw ShapeError("regression_loss: " + std::to_string(predicted.size()) +
                     " predictions for " + std::to_string(gold.size()) + " gold scores");
  }
  const double n = static_cast<double>(gold.size());
  double total = 0.0;
  std::vector<double> diff(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    diff[i] = predicted[i] - gold[i];
    total += diff[i] * diff[i];
  }
  return autograd::make_result("regression_loss", Shape{1}, {total / n},
                               autograd::should_record({&predicted}),
                               [predicted, diff, n](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(predicted);
                                 for (std::size_t i = 0; i < diff.size(); ++i) {
                                   sink[i] += g[0] * 2.0 * diff[i] / n;
                                 }
                               });
}

Tensor rtd_loss(const Tensor& probs, std::span<const std::uint8_t> flags) {
  if (probs.size() != flags.size()) throw ShapeError("rtd_loss: probs and flags differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    const double p = probs[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericError("rtd_loss: probability " + format_double(p) + " at token " +
                         std::to_string(i) + " is outside (0, 1)");
    }
    total -= flags[i] ? std::log(p) : std::log1p(-p);
  }
  std::vector<std::uint8_t> f(flags.begin(), flags.end());
  return autograd::make_result("rtd_loss", Shape{1}, {total}, autograd::should_record({&probs}),
                               [probs, f](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(probs);
                                 for (std::size_t i = 0; i < f.size(); ++i) {
                                   sink[i] += f[i] ? -g[0] / probs[i] : g[0] / (1.0 - probs[i]);
                                 }
                               });
}

Tensor rtd_loss_with_logits(const Tensor& logits, std::span<const std::uint8_t> flags) {
  if (logits.size() != flags.size()) {
    throw ShapeError("rtd_loss_with_logits: logits and flags differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    total += flags[i] ? softplus(-logits[i]) : softplus(logits[i]);
  }
  std::vector<std::uint8_t> f(flags.begin(), flags.end());
  return autograd::make_result("rtd_loss_with_logits", Shape{1}, {total},
                               autograd::should_record({&logits}),
                               [logits, f](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(logits);
                                 for (std::size_t i = 0; i < f.size(); ++i) {
                                   sink[i] += g[0] * (sigmoid(logits[i]) - (f[i] ? 1.0 : 0.0));
                                 }
                               });
}

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets) {
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy_logits: one target per row expected");
  std::vector<double> soft(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw InputError("cross_entropy_logits: target " + std::to_string(targets[i]) +
                       " out of range");
    }
    const double* row = logits.data().data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < v; ++j) soft[i * v + j] = std::exp(row[j] - mx) / z;
    total += mx + std::log(z) - row[targets[i]];
  }
  std::vector<int> t(targets.begin(), targets.end());
  return autograd::make_result("cross_entropy_logits", Shape{1}, {total},
                               autograd::should_record({&logits}),
                               [logits, t, soft = std::move(soft), v](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(logits);
                                 for (std::size_t i = 0; i < t.size(); ++i) {
                                   for (std::size_t j = 0; j < v; ++j) {
                                     const double onehot = static_cast<int>(j) == t[i] ? 1.0 : 0.0;
                                     sink[i * v + j] += g[0] * (soft[i * v + j] - onehot);
                                   }
                                 }
                               });
}

double lr_at(double step, std::size_t total_steps, double peak, double warmup_ratio) {
  if (total_steps == 0) return 0.0;
  const double total = static_cast<double>(total_steps);
  if (step < 0.0 || step > total) {
    throw UsageError("lr_at: step " + format_double(step) + " outside [0, " +
                     std::to_string(total_steps) + "]");
  }
  const double warmup = warmup_ratio * total;
  if (step < warmup) return peak * step / warmup;
  return peak * (total - step) / (total - warmup);
}

AdamW::AdamW(ParameterSet params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_.items()) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - lr * config_.weight_decay;
  const auto& items = params_.items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    Tensor param = items[k].tensor;
    if (!param.has_grad()) continue;
    const auto grad = param.grad();
    for (double g : grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + items[k].name);
    }
    auto values = param.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] *= decay;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

double clip_grad_norm(const ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.items()) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params.items()) {
      if (!p.tensor.has_grad()) continue;
      Tensor handle = p.tensor;
      for (double& g : handle.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ConfigError("warmup_ratio must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (freeze_lm_head && !lm_head_reuse) {
    throw ConfigError("freeze_lm_head needs lm_head_reuse");
  }
}

namespace {

// "9e-06" -> "9e-6": shortest mantissa, exponent without padding.
std::string compact_scientific(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::scientific);
  std::string text(buf, res.ptr);
  const auto e = text.find('e');
  std::string mantissa = text.substr(0, e);
  std::string exponent = text.substr(e + 1);
  std::string sign;
  if (!exponent.empty() && (exponent[0] == '-' || exponent[0] == '+')) {
    if (exponent[0] == '-') sign = "-";
    exponent.erase(0, 1);
  }
  while (exponent.size() > 1 && exponent[0] == '0') exponent.erase(0, 1);
  return mantissa + "e" + sign + exponent;
}

}  // namespace

std::string run_label(double learning_rate, std::size_t batch_size) {
  return "LR:" + compact_scientific(learning_rate) + ", BSZ:" + std::to_string(batch_size);
}

std::string run_dir_name(double learning_rate, std::size_t batch_size) {
  return "LR" + compact_scientific(learning_rate) + "_BSZ" + std::to_string(batch_size);
}

Predictions predict(const PlausibilityModel& model, std::span<const FilledExample> examples) {
  Predictions out;
  out.task = model.config().task;
  for (const auto& ex : examples) {
    const Tensor y = model.forward(ex.token_ids, ex.span, Mode::eval);
    out.ids.push_back(ex.id);
    if (out.task == Task::classification) {
      out.probs.push_back({y[0], y[1], y[2]});
    } else {
      out.scores.push_back(y[0]);
    }
  }
  return out;
}

double dev_metric(const Predictions& predictions, std::span<const FilledExample> examples) {
  if (predictions.ids.size() != examples.size()) {
    throw UsageError("dev_metric: predictions and examples differ in length");
  }
  if (predictions.task == Task::classification) {
    std::vector<Label> predicted, gold;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (!examples[i].label) throw InputError("no gold label for " + examples[i].id);
      const auto& p = predictions.probs[i];
      predicted.push_back(static_cast<Label>(std::max_element(p.begin(), p.end()) - p.begin()));
      gold.push_back(*examples[i].label);
    }
    return accuracy(predicted, gold);
  }
  std::vector<double> gold;
  for (const auto& ex : examples) {
    if (!ex.score) throw InputError("no gold score for " + ex.id);
    gold.push_back(*ex.score);
  }
  try {
    return spearman(predictions.scores, gold);
  } catch (const UndefinedCorrelationError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double train_batch(const PlausibilityModel& model, std::span<const FilledExample> batch,
                   AdamW& optimizer, double lr, const TrainConfig& config,
                   RngStream* dropout_rng) {
  if (batch.empty()) throw UsageError("train_batch: empty batch");
  optimizer.parameters().zero_grad();
  double loss_sum = 0.0;
  {
    GradientTape tape;
    std::vector<Tensor> outputs;
    outputs.reserve(batch.size());
    for (const auto& ex : batch) {
      outputs.push_back(model.forward(ex.token_ids, ex.span, Mode::train, dropout_rng));
    }
    const Tensor stacked = concat_rows(outputs);
    const double n = static_cast<double>(batch.size());
    Tensor objective;
    if (model.config().task == Task::classification) {
      std::vector<Label> gold;
      for (const auto& ex : batch) {
        if (!ex.label) throw InputError("no gold label for " + ex.id);
        gold.push_back(*ex.label);
      }
      const Tensor total = classification_loss(stacked, gold);
      loss_sum = total.item();
      objective = affine(total, 1.0 / n, 0.0);
    } else {
      std::vector<double> gold;
      for (const auto& ex : batch) {
        if (!ex.score) throw InputError("no gold score for " + ex.id);
        gold.push_back(*ex.score);
      }
      objective = regression_loss(stacked, gold);
      loss_sum = objective.item() * n;
    }
    tape.backward(objective);
  }
  if (config.clip_norm > 0.0) clip_grad_norm(optimizer.parameters(), config.clip_norm);
  optimizer.step(lr);
  return loss_sum;
}

ModelConfig model_config_for(const BackboneConfig& architecture, const TrainConfig& config) {
  ModelConfig mc;
  mc.backbone = architecture;
  mc.backbone.dropout_p = config.dropout_p;
  mc.task = config.task;
  mc.lm_head_reuse = config.lm_head_reuse;
  mc.freeze_lm_head = config.freeze_lm_head;
  mc.head_dropout = config.dropout_p;
  return mc;
}

FinetuneResult finetune(const Checkpoint* pretrained, const BackboneConfig& architecture,
                        std::span<const FilledExample> train, std::span<const FilledExample> dev,
                        const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw InputError("no training examples");
  if (dev.empty()) throw InputError("no dev examples");

  BackboneConfig arch = architecture;
  if (pretrained != nullptr) {
    require_architecture(*pretrained, architecture);
    arch = backbone_from_header(*pretrained);
  }
  ModelConfig mc = model_config_for(arch, config);
  if (pretrained != nullptr && config.lm_head_reuse && pretrained->has("lm_head_activation")) {
    mc.lm_head_activation = parse_activation(pretrained->get("lm_head_activation"));
  }
  mc.backbone.validate();

  RngStream init_rng(config.seed, "finetune.init");
  FinetuneResult result;
  result.model = std::make_unique<PlausibilityModel>(mc, init_rng);
  const PlausibilityModel& model = *result.model;
  if (pretrained != nullptr) {
    std::vector<std::string> prefixes = {"backbone."};
    if (config.lm_head_reuse) prefixes.push_back("lm_head.");
    restore_parameters(model.all_parameters(), *pretrained, prefixes);
  }

  AdamWConfig opt_config;
  opt_config.weight_decay = config.weight_decay;
  AdamW optimizer(model.trainable_parameters(), opt_config);

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const RngStream shuffle_root(config.seed, "finetune.shuffle");
  const RngStream dropout_root(config.seed, "finetune.dropout");

  const ParameterSet persisted = model.all_parameters();
  std::vector<NamedArray> best_snapshot;
  bool have_best = false;
  const std::string metric_name = config.task == Task::classification ? "accuracy" : "spearman";

  std::size_t step = 0;
  std::vector<FilledExample> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    RngStream shuffle_rng = shuffle_root.fork("epoch" + std::to_string(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    RngStream dropout_rng = dropout_root.fork("epoch" + std::to_string(epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(train[order[i]]);
      }
      ++step;
      // Evaluating the schedule at the step midpoint keeps the first and last
      // updates non-zero.
      const double lr = lr_at(static_cast<double>(step) - 0.5, total_steps,
                              config.learning_rate, config.warmup_ratio);
      const double loss_sum = train_batch(model, batch, optimizer, lr, config, &dropout_rng);
      if (!std::isfinite(loss_sum)) {
        throw NumericError("training diverged at step " + std::to_string(step));
      }
      epoch_loss += loss_sum;
      result.log += std::to_string(step) + "\t" + format_double(lr) + "\t" +
                    format_double(loss_sum / static_cast<double>(batch.size())) + "\t" +
                    format_double(loss_sum) + "\n";
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_train_loss = epoch_loss / static_cast<double>(train.size());
    record.dev_metric = dev_metric(predict(model, dev), dev);
    result.history.push_back(record);
    result.log += "epoch\t" + std::to_string(epoch) + "\tdev_" + metric_name + "\t" +
                  (std::isnan(record.dev_metric) ? "undefined" : format_double(record.dev_metric)) +
                  "\n";
    if (!std::isnan(record.dev_metric) && (!have_best || record.dev_metric > result.best_dev_metric)) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_dev_metric = record.dev_metric;
      best_snapshot = capture_parameters(persisted);
    }
  }

  if (have_best) {
    Checkpoint snapshot;
    snapshot.arrays = std::move(best_snapshot);
    restore_parameters(persisted, snapshot, std::vector<std::string>{""});
  } else {
    result.best_epoch = config.epochs;
    result.best_dev_metric = std::numeric_limits<double>::quiet_NaN();
  }
  result.log += "best_epoch\t" + std::to_string(result.best_epoch) + "\n";
  return result;
}

Checkpoint make_plausibility_checkpoint(const PlausibilityModel& model, const TrainConfig& config,
                                        const std::string& config_hash) {
  Checkpoint ckpt;
  write_backbone_header(ckpt.header, model.config().backbone);
  ckpt.header["kind"] = "plausibility";
  ckpt.header["task"] = std::string(task_name(model.config().task));
  ckpt.header["lm_head_reuse"] = model.config().lm_head_reuse ? "1" : "0";
  ckpt.header["freeze_lm_head"] = model.config().freeze_lm_head ? "1" : "0";
  ckpt.header["lm_head_activation"] =
      std::string(activation_name(model.config().lm_head_activation));
  ckpt.header["head_dropout"] = format_double(model.config().head_dropout);
  ckpt.header["seed"] = std::to_string(config.seed);
  ckpt.header["config_hash"] = config_hash;
  ckpt.arrays = capture_parameters(model.all_parameters());
  return ckpt;
}

std::unique_ptr<PlausibilityModel> model_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.get("kind") != "plausibility") {
    throw CheckpointError("expected a fine-tuned checkpoint, got kind '" + checkpoint.get("kind") +
                          "'");
  }
  ModelConfig mc;
  mc.backbone = backbone_from_header(checkpoint);
  try {
    mc.task = parse_task(checkpoint.get("task"));
    mc.lm_head_reuse = checkpoint.get("lm_head_reuse") == "1";
    mc.freeze_lm_head = checkpoint.get("freeze_lm_head") == "1";
    mc.lm_head_activation = parse_activation(checkpoint.get("lm_head_activation"));
    mc.head_dropout = parse_double(checkpoint.get("head_dropout"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  RngStream init_rng(0, "checkpoint.restore");
  auto model = std::make_unique<PlausibilityModel>(mc, init_rng);
  restore_parameters(model->all_parameters(), checkpoint, std::vector<std::string>{""});
  return model;
}

}  // namespace clarify
