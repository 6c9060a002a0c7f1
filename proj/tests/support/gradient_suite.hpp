#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clarify/heads.hpp"
#include "clarify/training.hpp"
#include "support/gradcheck.hpp"

namespace clarify::testing {

// Finite-difference checks shared by the unit tests and the acceptance run.
// Each entry is one (case, seed) pair.

struct GradCase {
  std::string name;
  int seed = 0;
  GradCheckResult result;
};

inline constexpr double kGradTolerance = 1e-4;

inline std::vector<GradCase> op_gradient_cases(int seeds) {
  std::vector<GradCase> out;
  for (int seed = 0; seed < seeds; ++seed) {
    auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                     std::vector<Tensor> inputs) {
      out.push_back({name, seed, grad_check(f, std::move(inputs))});
    };
    RngStream rng(seed, "gradcheck");
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor c = random_tensor({3, 4}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const Tensor w34 = random_tensor({3, 4}, rng);
    const Tensor w32 = random_tensor({3, 2}, rng);

    check("matmul", [&] { return weighted_sum(matmul(a, b), w32); }, {a, b});
    check("add", [&] { return weighted_sum(add(a, c), w34); }, {a, c});
    check("add_bias", [&] { return weighted_sum(add_bias(a, bias), w34); }, {a, bias});
    {
      const Tensor bb = random_tensor({2}, rng);
      check("linear", [&] { return weighted_sum(linear(a, b, bb), w32); }, {a, b, bb});
    }
    check("mul", [&] { return weighted_sum(mul(a, c), w34); }, {a, c});
    check("affine", [&] { return weighted_sum(affine(a, -1.7, 0.3), w34); }, {a});
    {
      // Keep every element clear of the bounds, where the derivative jumps.
      Tensor x = a.clone();
      for (auto& v : x.mutable_data()) {
        if (std::abs(v + 0.5) < 1e-2 || std::abs(v - 0.8) < 1e-2) v += 0.05;
      }
      check("clamp", [&] { return weighted_sum(clamp(x, -0.5, 0.8), w34); }, {x});
    }
    for (Activation act : {Activation::tanh, Activation::gelu, Activation::sigmoid}) {
      check(std::string(activation_name(act)),
            [&] { return weighted_sum(activation(a, act), w34); }, {a});
    }
    check("softmax rows", [&] { return weighted_sum(softmax(a, 1), w34); }, {a});
    check("softmax columns", [&] { return weighted_sum(softmax(a, 0), w34); }, {a});
    {
      const Tensor gamma = random_tensor({4}, rng);
      const Tensor beta = random_tensor({4}, rng);
      check("layer_norm", [&] { return weighted_sum(layer_norm(a, gamma, beta), w34); },
            {a, gamma, beta});
    }
    check(
        "dropout",
        [&] {
          RngStream drop(seed, "fixed-mask");
          return weighted_sum(dropout(a, 0.4, Mode::train, drop), w34);
        },
        {a});
    {
      const Tensor table = random_tensor({6, 4}, rng);
      const std::vector<int> ids = {5, 0, 5};
      check("embedding", [&] { return weighted_sum(embedding(table, ids), w34); }, {table});
    }
    {
      const Tensor q = random_tensor({5, 4}, rng);
      const Tensor k = random_tensor({5, 4}, rng);
      const Tensor v = random_tensor({5, 4}, rng);
      const Tensor w = random_tensor({5, 4}, rng);
      const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 1};
      check("attention", [&] { return weighted_sum(multi_head_attention(q, k, v, 2), w); },
            {q, k, v});
      check("masked attention",
            [&] { return weighted_sum(multi_head_attention(q, k, v, 2, mask), w); }, {q, k, v});
    }
    {
      const Tensor w14 = random_tensor({1, 4}, rng);
      check("span_mean", [&] { return weighted_sum(span_mean(a, 1, 3), w14); }, {a});
    }
    {
      const Tensor w64 = random_tensor({6, 4}, rng);
      check(
          "concat_rows",
          [&] {
            const std::vector<Tensor> parts = {a, c};
            return weighted_sum(concat_rows(parts), w64);
          },
          {a, c});
    }
    check("mean", [&] { return mean(mul(a, c)); }, {a, c});
    {
      const Tensor pos = affine(activation(a, Activation::sigmoid), 1.0, 0.1).clone();
      check("log", [&] { return weighted_sum(log(pos), w34); }, {pos});
    }
  }
  return out;
}

inline std::vector<GradCase> loss_gradient_cases(int seeds) {
  std::vector<GradCase> out;
  for (int seed = 0; seed < seeds; ++seed) {
    auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                     std::vector<Tensor> inputs) {
      out.push_back({name, seed, grad_check(f, std::move(inputs))});
    };
    RngStream rng(seed, "loss-gradcheck");
    const Tensor logits = random_tensor({4, 3}, rng);
    const std::vector<Label> gold = {Label::plausible, Label::implausible, Label::neutral,
                                     Label::plausible};
    check("classification_loss", [&] { return classification_loss(softmax(logits, 1), gold); },
          {logits});

    const Tensor raw = random_tensor({4, 1}, rng);
    const std::vector<double> scores = {1.2, 4.9, 3.0, 2.5};
    check(
        "regression_loss",
        [&] { return regression_loss(affine(activation(raw, Activation::sigmoid), 4.0, 1.0), scores); },
        {raw});

    const Tensor z = random_tensor({6, 1}, rng, 2.0);
    const std::vector<std::uint8_t> flags = {1, 0, 1, 1, 0, 1};
    check("rtd_loss", [&] { return rtd_loss(activation(z, Activation::sigmoid), flags); }, {z});
    check("rtd_loss_with_logits", [&] { return rtd_loss_with_logits(z, flags); }, {z});

    const Tensor vocab_logits = random_tensor({3, 7}, rng);
    const std::vector<int> targets = {6, 0, 3};
    check("cross_entropy_logits", [&] { return cross_entropy_logits(vocab_logits, targets); },
          {vocab_logits});
  }
  return out;
}

inline ModelConfig gradcheck_model(Task task, bool reuse) {
  ModelConfig m;
  m.backbone.vocab_size = 12;
  m.backbone.d_model = 8;
  m.backbone.n_layers = 2;
  m.backbone.n_heads = 2;
  m.backbone.d_ff = 16;
  m.backbone.max_seq_len = 16;
  m.backbone.dropout_p = 0.1;
  m.task = task;
  m.lm_head_reuse = reuse;
  m.head_dropout = 0.1;
  return m;
}

/// Backbone -> LM head -> span pooling -> dense/tanh -> softmax or scaled
/// sigmoid -> loss, with dropout active under a fixed mask. The no-LM-head
/// variant runs on every fourth seed.
inline std::vector<GradCase> full_graph_gradient_cases(int seeds) {
  std::vector<GradCase> out;
  for (int seed = 0; seed < seeds; ++seed) {
    for (Task task : {Task::classification, Task::regression}) {
      for (bool reuse : {true, false}) {
        if (!reuse && seed % 4 != 0) continue;
        RngStream init(seed, "full-graph");
        const PlausibilityModel model(gradcheck_model(task, reuse), init);
        RngStream data(seed, "full-graph-data");
        std::vector<std::vector<int>> seqs;
        std::vector<SpanIndex> spans;
        for (int e = 0; e < 2; ++e) {
          std::vector<int> ids(5 + data.below(6));
          for (auto& t : ids) t = static_cast<int>(4 + data.below(8));
          const std::size_t b = data.below(ids.size() - 1);
          spans.push_back({b, b + 1 + data.below(std::min<std::size_t>(3, ids.size() - b - 1) + 1)});
          seqs.push_back(std::move(ids));
        }
        const std::vector<Label> gold = {Label::neutral, Label::plausible};
        const std::vector<double> scores = {2.0, 4.5};
        auto loss = [&] {
          RngStream drop(seed, "full-graph-dropout");
          std::vector<Tensor> outs;
          for (std::size_t e = 0; e < seqs.size(); ++e) {
            outs.push_back(model.forward(seqs[e], spans[e], Mode::train, &drop));
          }
          const Tensor stacked = concat_rows(outs);
          return task == Task::classification ? classification_loss(stacked, gold)
                                              : regression_loss(stacked, scores);
        };
        std::vector<Tensor> params;
        for (const auto& p : model.trainable_parameters().items()) params.push_back(p.tensor);
        out.push_back({std::string(task_name(task)) + (reuse ? " graph" : " graph without LM head"),
                       seed, grad_check(loss, std::move(params))});
      }
    }
  }
  return out;
}

}  // namespace clarify::testing
