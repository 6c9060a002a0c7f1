#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "clarify/rng.hpp"
#include "clarify/tensor.hpp"

namespace clarify {

enum class Activation { tanh, gelu, sigmoid };
enum class Mode { train, eval };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

inline constexpr double kLayerNormEps = 1e-5;

// Differentiable ops. Matrices are rank-2 row-major; a rank-1 operand is
// read as a single row wherever a matrix is expected.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// x[m x n] + bias[n], bias broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x * weight + bias.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
/// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, double scale, double shift);
/// Elementwise clamp to [lo, hi]; the gradient is zero where clamped.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor activation(const Tensor& x, Activation kind);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);
/// Inverted dropout: identity in eval mode; in train mode each element is
/// zeroed with probability p and survivors are scaled by 1/(1-p).
Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng);
/// Row gather: result[i] = table[ids[i]].
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Multi-head scaled dot-product attention over q, k, v of shape [n x d].
/// `key_mask`, when non-empty, marks valid key positions (1) and padding (0);
/// padding keys receive zero attention weight.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t n_heads, std::span<const std::uint8_t> key_mask = {});
/// Mean of rows [begin, end) of x, shape [1 x d].
Tensor span_mean(const Tensor& x, std::size_t begin, std::size_t end);
/// Stacks row blocks with equal column counts.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor log(const Tensor& x);

/// Attention weights the forward pass would use, one n x n row-major block
/// per head. Not differentiable; for inspection and tests.
std::vector<std::vector<double>> attention_probabilities(const Tensor& q, const Tensor& k,
                                                         std::size_t n_heads,
                                                         std::span<const std::uint8_t> key_mask = {});

}  // namespace clarify
