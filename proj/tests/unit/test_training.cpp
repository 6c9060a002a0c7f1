#include <doctest.h>

#include <cmath>

#include "clarify/errors.hpp"
#include "clarify/synthetic.hpp"
#include "clarify/training.hpp"

using namespace clarify;

namespace {

struct TinyTask {
  Vocabulary vocab;
  std::vector<FilledExample> train, dev;
  BackboneConfig arch;
};

TinyTask tiny_task(Task task, std::size_t per_pattern = 4) {
  const Lexicon lexicon(GrammarConfig{});
  SyntheticTaskConfig tc;
  tc.train_per_pattern = per_pattern;
  tc.dev_per_pattern = 2;
  tc.test_per_pattern = 1;
  const auto data = generate_synthetic_task(tc, lexicon);
  TinyTask t;
  t.vocab = Vocabulary::build(vocabulary_texts({}, data.train.instances), 512);
  t.arch.vocab_size = t.vocab.size();
  t.arch.d_model = 16;
  t.arch.n_heads = 2;
  t.arch.n_layers = 1;
  t.arch.d_ff = 32;
  t.arch.max_seq_len = 64;
  const bool cls = task == Task::classification;
  t.train = expand(data.train.instances, t.vocab, 64, cls ? &data.train.labels : nullptr,
                   cls ? nullptr : &data.train.scores);
  t.dev = expand(data.dev.instances, t.vocab, 64, cls ? &data.dev.labels : nullptr,
                 cls ? nullptr : &data.dev.scores);
  return t;
}

}  // namespace

TEST_CASE("learning-rate schedule properties") {
  const std::size_t total = 1000;
  const double peak = 3e-4;
  CHECK(lr_at(0, total, peak, 0.1) == 0.0);
  CHECK(lr_at(100, total, peak, 0.1) == doctest::Approx(peak));
  CHECK(lr_at(1000, total, peak, 0.1) == doctest::Approx(0.0));
  CHECK(lr_at(50, total, peak, 0.1) == doctest::Approx(peak / 2));
  CHECK(lr_at(550, total, peak, 0.1) == doctest::Approx(peak / 2));
  double prev = -1.0;
  for (double s = 0; s <= 100; s += 1.0) {
    const double lr = lr_at(s, total, peak, 0.1);
    CHECK(lr >= prev);
    prev = lr;
  }
  for (double s = 100; s <= 1000; s += 1.0) {
    const double lr = lr_at(s, total, peak, 0.1);
    CHECK(lr <= prev + 1e-18);
    CHECK(lr <= peak);
    CHECK(lr >= 0.0);
    prev = lr;
  }
  CHECK(lr_at(0, total, peak, 0.0) == doctest::Approx(peak));
  CHECK_THROWS_AS(lr_at(-1, total, peak, 0.1), UsageError);
  CHECK_THROWS_AS(lr_at(1001, total, peak, 0.1), UsageError);
}

TEST_CASE("one AdamW step by hand") {
  ParameterSet params;
  Tensor w = Tensor::vector({1.0}, true);
  params.add("w", w);
  AdamW opt(params, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  w.mutable_grad()[0] = 0.5;
  opt.step(0.1);
  // Decay: 1 * (1 - 0.1 * 0.01). m = 0.05, v = 0.00025; bias-corrected
  // m_hat = 0.5, v_hat = 0.25.
  const double expected = 0.999 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(w[0] == doctest::Approx(expected).epsilon(1e-15));

  // A parameter without a gradient is left alone.
  ParameterSet p2;
  Tensor untouched = Tensor::vector({4.0}, true);
  p2.add("u", untouched);
  AdamW opt2(p2);
  opt2.step(0.1);
  CHECK(untouched[0] == 4.0);
}

TEST_CASE("AdamW converges on a quadratic") {
  ParameterSet params;
  Tensor w = Tensor::vector({-3.0}, true);
  params.add("w", w);
  AdamW opt(params, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 2000; ++i) {
    params.zero_grad();
    GradientTape tape;
    const Tensor d = affine(w, 1.0, -2.0);
    tape.backward(sum(mul(d, d)));
    opt.step(0.05);
  }
  CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("AdamW rejects non-finite gradients by name") {
  ParameterSet params;
  Tensor w = Tensor::vector({1.0}, true);
  params.add("layer.w", w);
  AdamW opt(params);
  w.mutable_grad()[0] = std::nan("");
  CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("layer.w"), NumericError);
}

TEST_CASE("gradient clipping") {
  ParameterSet params;
  Tensor a = Tensor::vector({0, 0}, true), b = Tensor::vector({0}, true);
  params.add("a", a);
  params.add("b", b);
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 0.0;
  b.mutable_grad()[0] = 4.0;
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == 3.0);
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("run names") {
  CHECK(run_label(9e-6, 32) == "LR:9e-6, BSZ:32");
  CHECK(run_label(1e-5, 64) == "LR:1e-5, BSZ:64");
  CHECK(run_dir_name(9e-6, 32) == "LR9e-6_BSZ32");
  CHECK(run_dir_name(2.5e-4, 48) == "LR2.5e-4_BSZ48");
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lm_head_reuse = false;
  c.freeze_lm_head = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training loss decreases on a fixed batch without dropout") {
  for (Task task : {Task::classification, Task::regression}) {
    auto t = tiny_task(task, 2);
    TrainConfig cfg;
    cfg.task = task;
    cfg.dropout_p = 0.0;
    cfg.learning_rate = 3e-3;
    RngStream init(1, "loss-decrease");
    const PlausibilityModel model(model_config_for(t.arch, cfg), init);
    AdamW opt(model.trainable_parameters(), AdamWConfig{0.9, 0.999, 1e-8, 0.0});
    const std::span<const FilledExample> batch(t.train.data(), 8);
    const double first = train_batch(model, batch, opt, cfg.learning_rate, cfg, nullptr);
    double previous = first;
    CAPTURE(task_name(task));
    for (int i = 0; i < 20; ++i) {
      const double loss = train_batch(model, batch, opt, cfg.learning_rate, cfg, nullptr);
      CHECK(loss < previous);
      previous = loss;
    }
    CHECK(previous < first);
  }
}

TEST_CASE("fine-tuning is deterministic and restores the best epoch") {
  auto t = tiny_task(Task::classification);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  const auto a = finetune(nullptr, t.arch, t.train, t.dev, cfg);
  const auto b = finetune(nullptr, t.arch, t.train, t.dev, cfg);
  CHECK(a.log == b.log);
  REQUIRE(a.history.size() == 3);
  double best = -1.0;
  for (const auto& h : a.history) best = std::max(best, h.dev_metric);
  CHECK(a.best_dev_metric == best);
  CHECK(a.history[a.best_epoch - 1].dev_metric == best);
  const auto preds = predict(*a.model, t.dev);
  CHECK(dev_metric(preds, t.dev) == doctest::Approx(best));

  const auto ckpt = make_plausibility_checkpoint(*a.model, cfg, "hash");
  const auto back = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(ckpt), "mem"));
  const auto preds2 = predict(*back, t.dev);
  CHECK(preds2.probs == preds.probs);
}

TEST_CASE("a pre-trained checkpoint must match the architecture") {
  auto t = tiny_task(Task::regression);
  Checkpoint ckpt;
  BackboneConfig other = t.arch;
  other.d_model = 32;
  write_backbone_header(ckpt.header, other);
  TrainConfig cfg;
  cfg.task = Task::regression;
  CHECK_THROWS_WITH_AS(finetune(&ckpt, t.arch, t.train, t.dev, cfg), doctest::Contains("dimension mismatch"),
                       CheckpointError);
}
