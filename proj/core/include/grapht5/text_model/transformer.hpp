#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "grapht5/fusion/decoder_input.hpp"
#include "grapht5/nn/layers.hpp"
#include "grapht5/text_model/vocabulary.hpp"

namespace grapht5::text_model {

using numerics::ParameterStore;
using numerics::Tensor;

struct TextModelConfig {
  std::size_t vocab_size = 2048;
  std::size_t width = 256;  // d
  std::size_t heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t ff_width = 1024;
  std::size_t max_source_len = 128;   // longest encoder input (|n| or |P|)
  std::size_t max_target_len = 128;   // |m|
  std::size_t max_context_len = 512;  // longest fused decoder context
  double dropout = 0.0;

  void validate() const;
};

template <typename T>
struct EncoderLayer {
  nn::LayerNorm<T> ln_attn;
  nn::MultiHeadAttention<T> self_attn;
  nn::LayerNorm<T> ln_ff;
  nn::Mlp<T> ff;
};

template <typename T>
struct DecoderLayer {
  nn::LayerNorm<T> ln_self;
  nn::MultiHeadAttention<T> self_attn;
  nn::LayerNorm<T> ln_cross;
  nn::MultiHeadAttention<T> cross_attn;
  nn::LayerNorm<T> ln_ff;
  nn::Mlp<T> ff;
};

// Pre-norm transformer encoder/decoder with learned absolute positions. One
// token table serves the encoder input, the decoder input and (transposed)
// the output projection.
template <typename T>
class TextModel {
 public:
  TextModel() = default;
  TextModel(ParameterStore<T> &store, const std::string &name, TextModelConfig config, std::uint64_t seed = 0);

  // S* = f(S): [n×d] for a padded token sequence.
  Tensor<T> encode(const TokenSequence &tokens) const;
  // Same stack on already-embedded input (token + position embeddings).
  Tensor<T> encode_embeddings(const Tensor<T> &embedded, const Mask &mask) const;
  Tensor<T> embed_source(std::span<const TokenId> ids) const;

  // Logits [t×V] for decoder input ids (shifted right) attending causally to
  // themselves and, through the context mask, to the fused context.
  Tensor<T> decode(const fusion::FusedDecoderInput<T> &context, std::span<const TokenId> decoder_ids) const;

  const TextModelConfig &config() const { return config_; }
  const Tensor<T> &token_embedding() const { return token_embedding_; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  Tensor<T> maybe_dropout(const Tensor<T> &x) const;

  TextModelConfig config_;
  Tensor<T> token_embedding_;
  Tensor<T> source_positions_;
  Tensor<T> target_positions_;
  Tensor<T> context_positions_;
  std::vector<EncoderLayer<T>> encoder_;
  nn::LayerNorm<T> encoder_norm_;
  std::vector<DecoderLayer<T>> decoder_;
  nn::LayerNorm<T> decoder_norm_;
  bool training_ = false;
  mutable std::mt19937_64 rng_;
};

// Shifted-right decoder input: [pad, y0, ..., y_{m-2}].
std::vector<TokenId> shift_right(std::span<const TokenId> targets);

template <typename T>
Tensor<T> encoder_forward(const TextModel<T> &model, const TokenSequence &tokens);

// Teacher-forced logits [|m|×V] for a padded target sequence.
template <typename T>
Tensor<T> decoder_forward(const TextModel<T> &model, const fusion::FusedDecoderInput<T> &context,
                          const TokenSequence &target);

extern template class TextModel<float>;
extern template class TextModel<double>;

}  // namespace grapht5::text_model
