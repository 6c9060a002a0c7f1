#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clarify/backbone.hpp"
#include "clarify/errors.hpp"
#include "clarify/heads.hpp"
#include "clarify/training.hpp"
#include "support/gradcheck.hpp"
#include "support/gradient_suite.hpp"

using namespace clarify;
using clarify::testing::random_tensor;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.vocab_size = 12;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  c.dropout_p = 0.1;
  return c;
}

ModelConfig tiny_model(Task task, bool reuse) {
  ModelConfig m;
  m.backbone = tiny_backbone();
  m.task = task;
  m.lm_head_reuse = reuse;
  m.head_dropout = 0.1;
  return m;
}

}  // namespace

TEST_CASE("encoder layer parameter count matches a hand count") {
  BackboneConfig c;
  c.d_model = 4;
  c.d_ff = 16;
  c.n_heads = 2;
  // 2 layer norms (2*4 each) + 4 projections (4*4+4 each) + 4*16+16 + 16*4+4.
  CHECK(layer_param_count(c) == 244);
  c.vocab_size = 10;
  c.max_seq_len = 6;
  c.n_layers = 3;
  CHECK(param_count(c) == 10 * 4 + 6 * 4 + 3 * 244 + 2 * 4);
  RngStream rng(1, "init");
  const Encoder enc(c, rng);
  CHECK(enc.parameters().scalar_count() == param_count(c));
}

TEST_CASE("backbone config validation") {
  BackboneConfig c = tiny_backbone();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_backbone();
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encoder rejects sequences longer than max_seq_len") {
  RngStream rng(1, "init");
  const Encoder enc(tiny_backbone(), rng);
  const std::vector<int> ids(17, 4);
  CHECK_THROWS_AS(enc.encode(ids), InputError);
  CHECK(enc.encode(std::vector<int>(16, 4)).shape() == Shape{16, 8});
}

TEST_CASE("padding keys do not change real-token representations") {
  RngStream rng(2, "init");
  const Encoder enc(tiny_backbone(), rng);
  const std::vector<int> ids = {4, 5, 6};
  const std::vector<int> padded = {4, 5, 6, Vocabulary::kPad, Vocabulary::kPad};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
  const Tensor a = enc.encode(ids);
  const Tensor b = enc.encode(padded, Mode::eval, nullptr, mask);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("span_pool on hand cases") {
  const Tensor h = Tensor::matrix({{1, -1}, {3, 5}, {5, 7}, {0, 0}});
  const Tensor one = span_pool(h, {1, 2});
  CHECK(one.at(0, 0) == 3.0);
  CHECK(one.at(0, 1) == 5.0);
  const Tensor two = span_pool(h, {1, 3});
  CHECK(two.at(0, 0) == 4.0);
  CHECK(two.at(0, 1) == 6.0);
  const Tensor all = span_pool(h, {0, 4});
  CHECK(all.at(0, 0) == 9.0 / 4.0);
  CHECK(all.at(0, 1) == 11.0 / 4.0);
  CHECK_THROWS_AS(span_pool(h, {2, 2}), InputError);
  CHECK_THROWS_AS(span_pool(h, {3, 5}), InputError);
}

TEST_CASE("regression outputs stay strictly inside (1, 5)") {
  RngStream rng(11, "regress");
  const TaskHead head(6, 0.0, rng);
  double lo = 5.0, hi = 1.0;
  for (int i = 0; i < 10000; ++i) {
    const Tensor x = random_tensor({1, 6}, rng, i % 2 == 0 ? 1.0 : 1e3);
    // Odd draws skip the tanh block, so the logit reaches deep saturation.
    const double y = head.regress(i % 2 == 0 ? head.enhance(x, Mode::eval) : x).item();
    REQUIRE(y > 1.0);
    REQUIRE(y < 5.0);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  CHECK(lo < 1.0 + 1e-9);
  CHECK(hi > 5.0 - 1e-9);
}

TEST_CASE("classification rows sum to one") {
  RngStream rng(12, "classify");
  const TaskHead head(6, 0.0, rng);
  for (int i = 0; i < 10000; ++i) {
    const Tensor x = random_tensor({1, 6}, rng, i % 2 == 0 ? 1.0 : 100.0);
    const Tensor p = head.classify(head.enhance(x, Mode::eval));
    REQUIRE(p.shape() == Shape{1, 3});
    const double s = p[0] + p[1] + p[2];
    REQUIRE(std::abs(s - 1.0) < 1e-9);
    for (std::size_t k = 0; k < 3; ++k) REQUIRE(p[k] >= 0.0);
  }
}

TEST_CASE("dropping the LM head removes exactly d^2 + 3d trainable scalars") {
  for (std::size_t d : {8, 16, 32}) {
    for (Task task : {Task::classification, Task::regression}) {
      ModelConfig with = tiny_model(task, true);
      with.backbone.d_model = d;
      with.backbone.d_ff = 2 * d;
      ModelConfig without = with;
      without.lm_head_reuse = false;
      RngStream r1(1, "m"), r2(1, "m");
      const PlausibilityModel a(with, r1), b(without, r2);
      CHECK(a.trainable_parameters().scalar_count() - b.trainable_parameters().scalar_count() ==
            d * d + 3 * d);
    }
  }
}

TEST_CASE("freezing the LM head keeps it out of the trainable set") {
  ModelConfig c = tiny_model(Task::classification, true);
  c.freeze_lm_head = true;
  RngStream rng(1, "m");
  const PlausibilityModel m(c, rng);
  for (const auto& p : m.trainable_parameters().items()) CHECK(p.name.rfind("lm_head.", 0) != 0);
  CHECK(m.all_parameters().contains("lm_head.dense.weight"));
}

TEST_CASE("task head exposes only the output pair of its task") {
  RngStream rng(1, "th");
  const TaskHead head(4, 0.1, rng);
  const auto cls = head.parameters(Task::classification);
  const auto reg = head.parameters(Task::regression);
  CHECK(cls.scalar_count() == 4 * 4 + 4 + 4 * 3 + 3);
  CHECK(reg.scalar_count() == 4 * 4 + 4 + 4 + 1);
  CHECK(head.all_parameters().scalar_count() == 4 * 4 + 4 + 4 * 3 + 3 + 4 + 1);
}

TEST_CASE("eval-mode forward is deterministic and train mode needs a dropout stream") {
  RngStream rng(3, "m");
  const PlausibilityModel m(tiny_model(Task::classification, true), rng);
  const std::vector<int> ids = {4, 5, 6, 7, 8};
  const Tensor a = m.forward(ids, {1, 3}, Mode::eval);
  const Tensor b = m.forward(ids, {1, 3}, Mode::eval);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK_THROWS_AS(m.forward(ids, {1, 3}, Mode::train), UsageError);
}

TEST_CASE("finite-difference gradients through the whole fine-tuning graph") {
  for (const auto& c : clarify::testing::full_graph_gradient_cases(20)) {
    INFO(c.name, " seed ", c.seed, ": ", c.result.worst);
    CHECK(c.result.max_rel_error < clarify::testing::kGradTolerance);
  }
}
