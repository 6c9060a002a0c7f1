#include "clarify/backbone.hpp"

#include <string>

#include "clarify/errors.hpp"

namespace clarify {

namespace {
constexpr double kInitStddev = 0.02;
}

void BackboneConfig::validate() const {
  if (vocab_size < 8) throw ConfigError("vocab_size must be at least 8");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
}

bool BackboneConfig::same_architecture(const BackboneConfig& other) const {
  return vocab_size == other.vocab_size && d_model == other.d_model &&
         n_layers == other.n_layers && n_heads == other.n_heads && d_ff == other.d_ff &&
         max_seq_len == other.max_seq_len;
}

std::size_t layer_param_count(const BackboneConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t layer_norms = 2 * 2 * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t feed_forward = d * c.d_ff + c.d_ff + c.d_ff * d + d;
  return layer_norms + attention + feed_forward;
}

std::size_t param_count(const BackboneConfig& c) {
  return c.vocab_size * c.d_model + c.max_seq_len * c.d_model + c.n_layers * layer_param_count(c) +
         2 * c.d_model;
}

Tensor init_normal(Shape shape, double stddev, RngStream& rng) {
  const auto n = shape_size(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor init_constant(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), true);
}

Encoder::Encoder(const BackboneConfig& config, RngStream& init_rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t ff = config_.d_ff;
  tok_emb_ = init_normal({config_.vocab_size, d}, kInitStddev, init_rng);
  pos_emb_ = init_normal({config_.max_seq_len, d}, kInitStddev, init_rng);
  layers_.reserve(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Layer layer;
    layer.ln1_gamma = init_constant({d}, 1.0);
    layer.ln1_beta = init_constant({d}, 0.0);
    layer.wq = init_normal({d, d}, kInitStddev, init_rng);
    layer.bq = init_constant({d}, 0.0);
    layer.wk = init_normal({d, d}, kInitStddev, init_rng);
    layer.bk = init_constant({d}, 0.0);
    layer.wv = init_normal({d, d}, kInitStddev, init_rng);
    layer.bv = init_constant({d}, 0.0);
    layer.wo = init_normal({d, d}, kInitStddev, init_rng);
    layer.bo = init_constant({d}, 0.0);
    layer.ln2_gamma = init_constant({d}, 1.0);
    layer.ln2_beta = init_constant({d}, 0.0);
    layer.w_ff1 = init_normal({d, ff}, kInitStddev, init_rng);
    layer.b_ff1 = init_constant({ff}, 0.0);
    layer.w_ff2 = init_normal({ff, d}, kInitStddev, init_rng);
    layer.b_ff2 = init_constant({d}, 0.0);
    layers_.push_back(std::move(layer));
  }
  lnf_gamma_ = init_constant({d}, 1.0);
  lnf_beta_ = init_constant({d}, 0.0);
}

Tensor Encoder::encode(std::span<const int> token_ids, Mode mode, RngStream* dropout_rng,
                       std::span<const std::uint8_t> key_mask) const {
  const std::size_t n = token_ids.size();
  if (n == 0) throw InputError("cannot encode an empty sequence");
  if (n > config_.max_seq_len) {
    throw InputError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  }
  const double p = config_.dropout_p;
  const bool use_dropout = mode == Mode::train && p > 0.0;
  if (use_dropout && dropout_rng == nullptr) {
    throw UsageError("train-mode encode needs a dropout stream");
  }
  auto drop = [&](const Tensor& t) { return use_dropout ? dropout(t, p, mode, *dropout_rng) : t; };

  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);

  Tensor x = drop(add(embedding(tok_emb_, token_ids), embedding(pos_emb_, positions)));
  for (const auto& layer : layers_) {
    const Tensor h = layer_norm(x, layer.ln1_gamma, layer.ln1_beta);
    const Tensor q = linear(h, layer.wq, layer.bq);
    const Tensor k = linear(h, layer.wk, layer.bk);
    const Tensor v = linear(h, layer.wv, layer.bv);
    const Tensor attended = multi_head_attention(q, k, v, config_.n_heads, key_mask);
    x = add(x, drop(linear(attended, layer.wo, layer.bo)));

    const Tensor h2 = layer_norm(x, layer.ln2_gamma, layer.ln2_beta);
    const Tensor inner = activation(linear(h2, layer.w_ff1, layer.b_ff1), Activation::gelu);
    x = add(x, drop(linear(inner, layer.w_ff2, layer.b_ff2)));
  }
  return layer_norm(x, lnf_gamma_, lnf_beta_);
}

ParameterSet Encoder::parameters(const std::string& prefix) const {
  ParameterSet params;
  params.add(prefix + "tok_emb", tok_emb_);
  params.add(prefix + "pos_emb", pos_emb_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    params.add(p + "ln1.gamma", layer.ln1_gamma);
    params.add(p + "ln1.beta", layer.ln1_beta);
    params.add(p + "attn.wq", layer.wq);
    params.add(p + "attn.bq", layer.bq);
    params.add(p + "attn.wk", layer.wk);
    params.add(p + "attn.bk", layer.bk);
    params.add(p + "attn.wv", layer.wv);
    params.add(p + "attn.bv", layer.bv);
    params.add(p + "attn.wo", layer.wo);
    params.add(p + "attn.bo", layer.bo);
    params.add(p + "ln2.gamma", layer.ln2_gamma);
    params.add(p + "ln2.beta", layer.ln2_beta);
    params.add(p + "ffn.w1", layer.w_ff1);
    params.add(p + "ffn.b1", layer.b_ff1);
    params.add(p + "ffn.w2", layer.w_ff2);
    params.add(p + "ffn.b2", layer.b_ff2);
  }
  params.add(prefix + "ln_f.gamma", lnf_gamma_);
  params.add(prefix + "ln_f.beta", lnf_beta_);
  return params;
}

}  // namespace clarify
