#include "clarify/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "clarify/errors.hpp"
#include "clarify/text.hpp"

namespace clarify {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x)));
}

double gelu_derivative(double x) {
  const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
}

struct AttentionForward {
  std::vector<std::vector<double>> probs;  // per head, n x n
  std::vector<double> output;              // n x d
};

AttentionForward attention_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                   std::size_t n_heads, std::span<const std::uint8_t> key_mask,
                                   bool with_output) {
  require_matrix(q, "attention");
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  if (k.rows() != n || k.cols() != d || (with_output && (v.rows() != n || v.cols() != d))) {
    throw ShapeError("attention: q/k/v shapes differ");
  }
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("attention: d=" + std::to_string(d) + " not divisible by heads=" +
                     std::to_string(n_heads));
  }
  if (!key_mask.empty() && key_mask.size() != n) {
    throw ShapeError("attention: key mask length differs from sequence length");
  }
  if (!key_mask.empty() && std::none_of(key_mask.begin(), key_mask.end(),
                                        [](std::uint8_t m) { return m != 0; })) {
    throw InputError("attention: every key position is masked");
  }
  const std::size_t dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto Q = as_matrix(q.data(), n, d);
  const auto K = as_matrix(k.data(), n, d);

  AttentionForward result;
  result.probs.resize(n_heads);
  if (with_output) result.output.assign(n * d, 0.0);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto col = static_cast<Eigen::Index>(h * dh);
    const auto width = static_cast<Eigen::Index>(dh);
    RowMatrix scores = (Q.middleCols(col, width) * K.middleCols(col, width).transpose()) * scale;
    for (std::size_t i = 0; i < n; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (key_mask.empty() || key_mask[j]) row_max = std::max(row_max, scores(i, j));
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = (key_mask.empty() || key_mask[j]) ? std::exp(scores(i, j) - row_max) : 0.0;
        scores(i, j) = e;
        total += e;
      }
      scores.row(static_cast<Eigen::Index>(i)) /= total;
    }
    if (with_output) {
      const auto V = as_matrix(v.data(), n, d);
      auto out = as_matrix(std::span<double>(result.output), n, d);
      out.middleCols(col, width).noalias() = scores * V.middleCols(col, width);
    }
    result.probs[h].assign(scores.data(), scores.data() + n * n);
  }
  return result;
}

}  // namespace

Activation parse_activation(std::string_view text) {
  const std::string name = to_lower(text);
  if (name == "tanh") return Activation::tanh;
  if (name == "gelu") return Activation::gelu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + std::string(text));
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::tanh: return "tanh";
    case Activation::gelu: return "gelu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()) + ")");
  }
  std::vector<double> out(m * n);
  as_matrix(std::span<double>(out), m, n).noalias() =
      as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  const bool track = autograd::should_record({&a, &b});
  return autograd::make_result("matmul", Shape{m, n}, std::move(out), track,
                               [a, b, m, k, n](std::span<const double> g) {
                                 const auto G = as_matrix(g, m, n);
                                 if (a.requires_grad()) {
                                   as_matrix(autograd::grad_sink(a), m, k).noalias() +=
                                       G * as_matrix(b.data(), k, n).transpose();
                                 }
                                 if (b.requires_grad()) {
                                   as_matrix(autograd::grad_sink(b), k, n).noalias() +=
                                       as_matrix(a.data(), m, k).transpose() * G;
                                 }
                               });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool track = autograd::should_record({&a, &b});
  return autograd::make_result("add", a.shape(), std::move(out), track,
                               [a, b](std::span<const double> g) {
                                 for (const Tensor* t : {&a, &b}) {
                                   if (!t->requires_grad()) continue;
                                   auto sink = autograd::grad_sink(*t);
                                   for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
                                 }
                               });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias of size " + std::to_string(bias.size()) + " for " +
                     std::to_string(n) + " columns");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  }
  const bool track = autograd::should_record({&x, &bias});
  return autograd::make_result("add_bias", x.shape(), std::move(out), track,
                               [x, bias, m, n](std::span<const double> g) {
                                 if (x.requires_grad()) {
                                   auto sink = autograd::grad_sink(x);
                                   for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
                                 }
                                 if (bias.requires_grad()) {
                                   auto sink = autograd::grad_sink(bias);
                                   for (std::size_t r = 0; r < m; ++r) {
                                     for (std::size_t c = 0; c < n; ++c) sink[c] += g[r * n + c];
                                   }
                                 }
                               });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool track = autograd::should_record({&a, &b});
  return autograd::make_result("mul", a.shape(), std::move(out), track,
                               [a, b](std::span<const double> g) {
                                 if (a.requires_grad()) {
                                   auto sink = autograd::grad_sink(a);
                                   for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i] * b[i];
                                 }
                                 if (b.requires_grad()) {
                                   auto sink = autograd::grad_sink(b);
                                   for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i] * a[i];
                                 }
                               });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x[i] + shift;
  const bool track = autograd::should_record({&x});
  return autograd::make_result("affine", x.shape(), std::move(out), track,
                               [x, scale](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(x);
                                 for (std::size_t i = 0; i < g.size(); ++i) sink[i] += scale * g[i];
                               });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw UsageError("clamp: lower bound above upper bound");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  const bool track = autograd::should_record({&x});
  return autograd::make_result("clamp", x.shape(), std::move(out), track,
                               [x, lo, hi](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(x);
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   if (x[i] > lo && x[i] < hi) sink[i] += g[i];
                                 }
                               });
}

Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("activation: non-finite input");
    switch (kind) {
      case Activation::tanh: out[i] = std::tanh(x[i]); break;
      case Activation::gelu: out[i] = gelu_value(x[i]); break;
      case Activation::sigmoid: out[i] = sigmoid_value(x[i]); break;
    }
  }
  const bool track = autograd::should_record({&x});
  std::vector<double> saved = track && kind != Activation::gelu ? out : std::vector<double>{};
  return autograd::make_result(
      "activation", x.shape(), std::move(out), track,
      [x, kind, y = std::move(saved)](std::span<const double> g) {
        auto sink = autograd::grad_sink(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double dy = 0.0;
          switch (kind) {
            case Activation::tanh: dy = 1.0 - y[i] * y[i]; break;
            case Activation::gelu: dy = gelu_derivative(x[i]); break;
            case Activation::sigmoid: dy = y[i] * (1.0 - y[i]); break;
          }
          sink[i] += g[i] * dy;
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double row_max = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) row_max = std::max(row_max, x[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(x[base + j * inner] - row_max);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  const bool track = autograd::should_record({&x});
  std::vector<double> saved = track ? out : std::vector<double>{};
  return autograd::make_result(
      "softmax", shape, std::move(out), track,
      [x, y = std::move(saved), outer, inner, len](std::span<const double> g) {
        auto sink = autograd::grad_sink(x);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + j * inner;
              sink[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t n = x.cols();
  const std::size_t m = n == 0 ? 0 : x.size() / n;
  if (gamma.size() != n || beta.size() != n) {
    throw ShapeError("layer_norm: gamma/beta size differs from last axis " + std::to_string(n));
  }
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (row[c] - mu) * rstd[r];
      out[r * n + c] = gamma[c] * xhat[r * n + c] + beta[c];
    }
  }
  const bool track = autograd::should_record({&x, &gamma, &beta});
  return autograd::make_result(
      "layer_norm", x.shape(), std::move(out), track,
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), m,
       n](std::span<const double> g) {
        if (gamma.requires_grad() || beta.requires_grad()) {
          auto gsink = gamma.requires_grad() ? autograd::grad_sink(gamma) : std::span<double>{};
          auto bsink = beta.requires_grad() ? autograd::grad_sink(beta) : std::span<double>{};
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
              if (!gsink.empty()) gsink[c] += g[r * n + c] * xhat[r * n + c];
              if (!bsink.empty()) bsink[c] += g[r * n + c];
            }
          }
        }
        if (!x.requires_grad()) return;
        auto sink = autograd::grad_sink(x);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = g[r * n + c] * gamma[c];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[r * n + c];
          }
          mean_dxhat /= static_cast<double>(n);
          mean_dxhat_xhat /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = g[r * n + c] * gamma[c];
            sink[r * n + c] +=
                rstd[r] * (dxhat - mean_dxhat - xhat[r * n + c] * mean_dxhat_xhat);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
    out[i] = x[i] * mask[i];
  }
  const bool track = autograd::should_record({&x});
  return autograd::make_result("dropout", x.shape(), std::move(out), track,
                               [x, mask = std::move(mask)](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(x);
                                 for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i] * mask[i];
                               });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InputError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const bool track = autograd::should_record({&table});
  return autograd::make_result(
      "embedding", Shape{ids.size(), d}, std::move(out), track,
      [table, id_copy = std::vector<int>(ids.begin(), ids.end()), d](std::span<const double> g) {
        auto sink = autograd::grad_sink(table);
        for (std::size_t i = 0; i < id_copy.size(); ++i) {
          const std::size_t base = static_cast<std::size_t>(id_copy[i]) * d;
          for (std::size_t c = 0; c < d; ++c) sink[base + c] += g[i * d + c];
        }
      });
}

std::vector<std::vector<double>> attention_probabilities(const Tensor& q, const Tensor& k,
                                                         std::size_t n_heads,
                                                         std::span<const std::uint8_t> key_mask) {
  return attention_forward(q, k, k, n_heads, key_mask, false).probs;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t n_heads, std::span<const std::uint8_t> key_mask) {
  auto fwd = attention_forward(q, k, v, n_heads, key_mask, true);
  const std::size_t n = q.rows(), d = q.cols();
  const bool track = autograd::should_record({&q, &k, &v});
  auto probs = std::make_shared<std::vector<std::vector<double>>>(std::move(fwd.probs));
  return autograd::make_result(
      "attention", Shape{n, d}, std::move(fwd.output), track,
      [q, k, v, probs, n, d, n_heads](std::span<const double> g) {
        const std::size_t dh = d / n_heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const auto G = as_matrix(g, n, d);
        const auto Q = as_matrix(q.data(), n, d);
        const auto K = as_matrix(k.data(), n, d);
        const auto V = as_matrix(v.data(), n, d);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const auto col = static_cast<Eigen::Index>(h * dh);
          const auto width = static_cast<Eigen::Index>(dh);
          const auto P = as_matrix(std::span<const double>((*probs)[h]), n, n);
          const auto Gh = G.middleCols(col, width);
          if (v.requires_grad()) {
            as_matrix(autograd::grad_sink(v), n, d).middleCols(col, width).noalias() +=
                P.transpose() * Gh;
          }
          if (!q.requires_grad() && !k.requires_grad()) continue;
          RowMatrix dP = Gh * V.middleCols(col, width).transpose();
          // Softmax backward per row: dS = P * (dP - <dP, P>_row).
          for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
            const double dot = dP.row(i).dot(P.row(i));
            dP.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
          }
          dP *= scale;
          if (q.requires_grad()) {
            as_matrix(autograd::grad_sink(q), n, d).middleCols(col, width).noalias() +=
                dP * K.middleCols(col, width);
          }
          if (k.requires_grad()) {
            as_matrix(autograd::grad_sink(k), n, d).middleCols(col, width).noalias() +=
                dP.transpose() * Q.middleCols(col, width);
          }
        }
      });
}

Tensor span_mean(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "span_mean");
  const std::size_t n = x.rows(), d = x.cols();
  if (begin >= end) {
    throw InputError("empty span [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  }
  if (end > n) {
    throw InputError("span end " + std::to_string(end) + " exceeds " + std::to_string(n) +
                     " rows");
  }
  const double inv = 1.0 / static_cast<double>(end - begin);
  std::vector<double> out(d, 0.0);
  for (std::size_t r = begin; r < end; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[c] += x[r * d + c];
  }
  for (double& v : out) v *= inv;
  const bool track = autograd::should_record({&x});
  return autograd::make_result("span_mean", Shape{1, d}, std::move(out), track,
                               [x, begin, end, d, inv](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(x);
                                 for (std::size_t r = begin; r < end; ++r) {
                                   for (std::size_t c = 0; c < d; ++c) sink[r * d + c] += g[c] * inv;
                                 }
                               });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total_rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != d) throw ShapeError("concat_rows: column counts differ");
    total_rows += p.rows();
    track = track || autograd::should_record({&p});
  }
  std::vector<double> out;
  out.reserve(total_rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return autograd::make_result(
      "concat_rows", Shape{total_rows, d}, std::move(out), track,
      [inputs = std::vector<Tensor>(parts.begin(), parts.end())](std::span<const double> g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
          if (p.requires_grad()) {
            auto sink = autograd::grad_sink(p);
            for (std::size_t i = 0; i < p.size(); ++i) sink[i] += g[offset + i];
          }
          offset += p.size();
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = autograd::should_record({&x});
  return autograd::make_result("sum", Shape{1}, {total}, track, [x](std::span<const double> g) {
    auto sink = autograd::grad_sink(x);
    for (double& s : sink) s += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.size()), 0.0);
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x[i]));
    out[i] = std::log(x[i]);
  }
  const bool track = autograd::should_record({&x});
  return autograd::make_result("log", x.shape(), std::move(out), track,
                               [x](std::span<const double> g) {
                                 auto sink = autograd::grad_sink(x);
                                 for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i] / x[i];
                               });
}

}  // namespace clarify
