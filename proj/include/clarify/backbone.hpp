#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clarify/ops.hpp"
#include "clarify/rng.hpp"
#include "clarify/tensor.hpp"

namespace clarify {

struct BackboneConfig {
  std::size_t vocab_size = 512;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 128;
  double dropout_p = 0.1;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  bool same_architecture(const BackboneConfig& other) const;
};

/// Learnable scalars in one encoder layer.
std::size_t layer_param_count(const BackboneConfig& config);
/// Learnable scalars in the whole encoder.
std::size_t param_count(const BackboneConfig& config);

/// Pre-norm transformer encoder with learned absolute positions.
class Encoder {
 public:
  Encoder(const BackboneConfig& config, RngStream& init_rng);

  /// Contextual representation of each token, shape [n x d_model].
  /// `key_mask` marks real tokens (1) vs padding (0); empty means no padding.
  /// `dropout_rng` is required in train mode when dropout_p > 0.
  Tensor encode(std::span<const int> token_ids, Mode mode = Mode::eval,
                RngStream* dropout_rng = nullptr,
                std::span<const std::uint8_t> key_mask = {}) const;

  const BackboneConfig& config() const { return config_; }

  /// Parameters in a fixed order, named "<prefix>tok_emb", "<prefix>layer0.wq", ...
  ParameterSet parameters(const std::string& prefix = "backbone.") const;

 private:
  struct Layer {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gamma, ln2_beta;
    Tensor w_ff1, b_ff1, w_ff2, b_ff2;
  };

  BackboneConfig config_;
  Tensor tok_emb_;
  Tensor pos_emb_;
  std::vector<Layer> layers_;
  Tensor lnf_gamma_, lnf_beta_;
};

/// N(0, stddev) initialized parameter tensor.
Tensor init_normal(Shape shape, double stddev, RngStream& rng);
Tensor init_constant(Shape shape, double value);

}  // namespace clarify
