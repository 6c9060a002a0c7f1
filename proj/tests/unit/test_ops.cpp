#include <doctest.h>

#include <cmath>
#include <numeric>

#include "clarify/errors.hpp"
#include "clarify/ops.hpp"
#include "clarify/training.hpp"
#include "support/gradcheck.hpp"
#include "support/gradient_suite.hpp"

using namespace clarify;
using clarify::testing::random_tensor;

namespace {

constexpr int kSeeds = 20;

void expect_gradients(const std::vector<clarify::testing::GradCase>& cases) {
  for (const auto& c : cases) {
    INFO(c.name, " seed ", c.seed, ": ", c.result.worst);
    CHECK(c.result.checked > 0);
    CHECK(c.result.max_rel_error < clarify::testing::kGradTolerance);
  }
}

}  // namespace

TEST_CASE("matmul agrees with a triple loop") {
  for (int seed = 0; seed < 10; ++seed) {
    RngStream rng(seed, "matmul");
    const std::size_t m = 1 + rng.below(7), k = 1 + rng.below(7), n = 1 + rng.below(7);
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    const Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(add_bias(a, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("backward needs a scalar loss") {
  GradientTape tape;
  Tensor x = Tensor::matrix({{1, 2}}, true);
  Tensor y = affine(x, 2.0, 0.0);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("non-finite results raise NumericError") {
  CHECK_THROWS_AS(log(Tensor::vector({1.0, -1.0})), NumericError);
}

TEST_CASE("ops without an active tape do not require gradients") {
  Tensor x = Tensor::matrix({{1, 2}}, true);
  CHECK_FALSE(affine(x, 2.0, 1.0).requires_grad());
  GradientTape tape;
  CHECK(affine(x, 2.0, 1.0).requires_grad());
}

TEST_CASE("gradient accumulates across uses of one tensor") {
  Tensor x = Tensor::vector({3.0}, true);
  GradientTape tape;
  tape.backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax rows are distributions") {
  RngStream rng(3, "softmax");
  const Tensor x = random_tensor({5, 7}, rng, 4.0);
  const Tensor p = softmax(x, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(p.at(i, j) > 0.0);
      s += p.at(i, j);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor big = softmax(Tensor::matrix({{1000.0, 0.0}}), 1);
  CHECK(big.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("layer norm output has zero mean and unit variance before the affine part") {
  RngStream rng(4, "ln");
  const std::size_t d = 9;
  const Tensor x = random_tensor({4, d}, rng, 3.0);
  const Tensor y = layer_norm(x, Tensor(Shape{d}, std::vector<double>(d, 1.0)),
                              Tensor::zeros({d}));
  for (std::size_t i = 0; i < 4; ++i) {
    double mu = 0.0, var = 0.0, mu_x = 0.0, var_x = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu_x += x.at(i, j) / d;
    for (std::size_t j = 0; j < d; ++j) var_x += (x.at(i, j) - mu_x) * (x.at(i, j) - mu_x) / d;
    for (std::size_t j = 0; j < d; ++j) {
      const double expected = (x.at(i, j) - mu_x) / std::sqrt(var_x + kLayerNormEps);
      CHECK(y.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
      mu += y.at(i, j) / d;
    }
    for (std::size_t j = 0; j < d; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu) / d;
    CHECK(std::abs(mu) < 1e-12);
    CHECK(var == doctest::Approx(var_x / (var_x + kLayerNormEps)).epsilon(1e-12));
  }
}

TEST_CASE("activations match their closed forms") {
  const Tensor x = Tensor::vector({-2.0, -0.5, 0.0, 0.7, 3.0});
  const Tensor t = activation(x, Activation::tanh);
  const Tensor s = activation(x, Activation::sigmoid);
  const Tensor g = activation(x, Activation::gelu);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(t[i] == doctest::Approx(std::tanh(x[i])).epsilon(1e-14));
    CHECK(s[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x[i]))).epsilon(1e-14));
    // tanh approximation of GELU
    const double inner = std::sqrt(2.0 / M_PI) * (x[i] + 0.044715 * x[i] * x[i] * x[i]);
    CHECK(g[i] == doctest::Approx(0.5 * x[i] * (1.0 + std::tanh(inner))).epsilon(1e-12));
    CHECK(std::abs(g[i] - 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)))) < 1e-3);
  }
  CHECK(parse_activation("GELU") == Activation::gelu);
  CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
}

TEST_CASE("dropout is the identity in eval mode and unbiased in train mode") {
  RngStream rng(5, "dropout");
  const Tensor x(Shape{20000}, std::vector<double>(20000, 1.0));
  const Tensor eval = dropout(x, 0.3, Mode::eval, rng);
  CHECK(std::equal(eval.data().begin(), eval.data().end(), x.data().begin()));
  const Tensor train = dropout(x, 0.3, Mode::train, rng);
  std::size_t zeros = 0;
  double total = 0.0;
  for (double v : train.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.7));
    }
    total += v;
  }
  CHECK(static_cast<double>(zeros) / 20000.0 == doctest::Approx(0.3).epsilon(0.05));
  CHECK(total / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("hand-worked single-head attention") {
  // Scores row = [0, ln 3] for both queries, so weights are [1/4, 3/4].
  const Tensor q = Tensor::matrix({{1.0}, {1.0}});
  const Tensor k = Tensor::matrix({{0.0}, {std::log(3.0)}});
  const Tensor v = Tensor::matrix({{4.0}, {8.0}});
  const Tensor out = multi_head_attention(q, k, v, 1);
  CHECK(out.at(0, 0) == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(out.at(1, 0) == doctest::Approx(7.0).epsilon(1e-12));

  const std::vector<std::uint8_t> mask = {1, 0};
  const Tensor masked = multi_head_attention(q, k, v, 1, mask);
  CHECK(masked.at(0, 0) == doctest::Approx(4.0).epsilon(1e-12));

  const auto probs = attention_probabilities(q, k, 1);
  REQUIRE(probs.size() == 1);
  CHECK(probs[0][0] == doctest::Approx(0.25));
  CHECK(probs[0][1] == doctest::Approx(0.75));
}

TEST_CASE("two heads attend over disjoint column blocks") {
  // Head 0 sees column 0, head 1 sees column 1; scale 1/sqrt(1).
  const Tensor q = Tensor::matrix({{1.0, 0.0}, {1.0, 0.0}});
  const Tensor k = Tensor::matrix({{0.0, 0.0}, {std::log(3.0), 0.0}});
  const Tensor v = Tensor::matrix({{4.0, 10.0}, {8.0, 20.0}});
  const Tensor out = multi_head_attention(q, k, v, 2);
  CHECK(out.at(0, 0) == doctest::Approx(7.0));
  CHECK(out.at(0, 1) == doctest::Approx(15.0));
}

TEST_CASE("clamp passes gradient only inside the bounds") {
  const Tensor x = Tensor::vector({-3.0, -0.5, 0.25, 2.0}, true);
  GradientTape tape;
  const Tensor y = clamp(x, -1.0, 1.0);
  CHECK(y[0] == -1.0);
  CHECK(y[1] == -0.5);
  CHECK(y[2] == 0.25);
  CHECK(y[3] == 1.0);
  tape.backward(sum(y));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
  CHECK_THROWS_AS(clamp(x, 1.0, -1.0), UsageError);
}

TEST_CASE("span_mean averages the requested rows") {
  const Tensor x = Tensor::matrix({{1, 10}, {2, 20}, {4, 40}, {8, 80}});
  const Tensor m = span_mean(x, 1, 3);
  CHECK(m.shape() == Shape{1, 2});
  CHECK(m.at(0, 0) == doctest::Approx(3.0));
  CHECK(m.at(0, 1) == doctest::Approx(30.0));
  CHECK_THROWS(span_mean(x, 2, 2));
  CHECK_THROWS(span_mean(x, 3, 5));
}

TEST_CASE("finite-difference gradients of every op") {
  expect_gradients(clarify::testing::op_gradient_cases(kSeeds));
}

TEST_CASE("finite-difference gradients of the losses") {
  expect_gradients(clarify::testing::loss_gradient_cases(kSeeds));
}

TEST_CASE("both RTD loss forms agree") {
  RngStream rng(9, "rtd-forms");
  const Tensor z = random_tensor({8, 1}, rng, 3.0);
  const std::vector<std::uint8_t> flags = {1, 0, 0, 1, 1, 0, 1, 1};
  CHECK(rtd_loss(activation(z, Activation::sigmoid), flags).item() ==
        doctest::Approx(rtd_loss_with_logits(z, flags).item()).epsilon(1e-10));
  CHECK_THROWS_AS(rtd_loss(Tensor::matrix({{1.0}}), std::vector<std::uint8_t>{1}), NumericError);
}

TEST_CASE("classification loss clamps vanishing gold probabilities") {
  const Tensor probs = Tensor::matrix({{1.0, 0.0, 0.0}});
  std::size_t clamped = 0;
  const std::vector<Label> gold = {Label::plausible};
  const double loss = classification_loss(probs, gold, &clamped).item();
  CHECK(clamped == 1);
  CHECK(loss == doctest::Approx(-std::log(1e-12)));
}
