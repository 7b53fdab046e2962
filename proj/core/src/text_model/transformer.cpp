#include "grapht5/text_model/transformer.hpp"

#include <algorithm>
#include <numeric>

#include "grapht5/error.hpp"

namespace grapht5::text_model {

namespace ops = numerics;
using numerics::Init;

void TextModelConfig::validate() const {
  if (vocab_size <= kReservedCount) throw ConfigError("vocabulary must hold more than the reserved tokens");
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ConfigError("model width " + std::to_string(width) + " must be a positive multiple of " +
                      std::to_string(heads) + " heads");
  }
  if (ff_width == 0 || max_source_len == 0 || max_target_len == 0 || max_context_len == 0) {
    throw ConfigError("text model sizes must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout ratio must lie in [0, 1)");
}

template <typename T>
TextModel<T>::TextModel(ParameterStore<T> &store, const std::string &name, TextModelConfig config,
                        std::uint64_t seed)
    : config_(config), rng_(seed) {
  config_.validate();
  const auto d = config_.width;
  token_embedding_ = store.create(name + ".token_embedding", {config_.vocab_size, d}, Init::kUniformFanIn, d);
  source_positions_ = store.create(name + ".source_positions", {config_.max_source_len, d}, Init::kUniformFanIn, d);
  target_positions_ = store.create(name + ".target_positions", {config_.max_target_len, d}, Init::kUniformFanIn, d);
  context_positions_ =
      store.create(name + ".context_positions", {config_.max_context_len, d}, Init::kUniformFanIn, d);
  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    const auto p = name + ".encoder.layer" + std::to_string(i);
    encoder_.push_back(EncoderLayer<T>{nn::LayerNorm<T>(store, p + ".ln_attn", d),
                                       nn::MultiHeadAttention<T>(store, p + ".self_attn", d, config_.heads),
                                       nn::LayerNorm<T>(store, p + ".ln_ff", d),
                                       nn::Mlp<T>(store, p + ".ff", d, config_.ff_width, d)});
  }
  encoder_norm_ = nn::LayerNorm<T>(store, name + ".encoder.final_ln", d);
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    const auto p = name + ".decoder.layer" + std::to_string(i);
    decoder_.push_back(DecoderLayer<T>{nn::LayerNorm<T>(store, p + ".ln_self", d),
                                       nn::MultiHeadAttention<T>(store, p + ".self_attn", d, config_.heads),
                                       nn::LayerNorm<T>(store, p + ".ln_cross", d),
                                       nn::MultiHeadAttention<T>(store, p + ".cross_attn", d, config_.heads),
                                       nn::LayerNorm<T>(store, p + ".ln_ff", d),
                                       nn::Mlp<T>(store, p + ".ff", d, config_.ff_width, d)});
  }
  decoder_norm_ = nn::LayerNorm<T>(store, name + ".decoder.final_ln", d);
}

template <typename T>
Tensor<T> TextModel<T>::maybe_dropout(const Tensor<T> &x) const {
  if (!training_ || config_.dropout == 0.0) return x;
  return ops::dropout(x, static_cast<T>(config_.dropout), rng_);
}

template <typename T>
Tensor<T> TextModel<T>::embed_source(std::span<const TokenId> ids) const {
  if (ids.size() > config_.max_source_len) {
    throw DimensionError("encoder input of " + std::to_string(ids.size()) + " tokens exceeds " +
                         std::to_string(config_.max_source_len) + " positions");
  }
  return ops::add(ops::embedding(token_embedding_, ids), ops::slice_rows(source_positions_, 0, ids.size()));
}

template <typename T>
Tensor<T> TextModel<T>::encode(const TokenSequence &tokens) const {
  if (tokens.mask.size() != tokens.ids.size()) throw DimensionError("token sequence mask is not aligned with ids");
  if (tokens.ids.size() > config_.max_source_len) {
    throw DimensionError("encoder input of " + std::to_string(tokens.ids.size()) + " tokens exceeds " +
                         std::to_string(config_.max_source_len) + " positions");
  }
  // Pad keys get exactly zero attention weight and every other sublayer is
  // row-wise, so running only the valid prefix leaves those rows unchanged.
  // Pad rows come back as zeros; downstream consumers mask them anyway.
  const std::size_t valid = tokens.valid_count();
  const bool prefix = std::all_of(tokens.mask.begin(), tokens.mask.begin() + static_cast<std::ptrdiff_t>(valid),
                                  [](bool m) { return m; });
  if (!prefix || valid == tokens.ids.size()) return encode_embeddings(embed_source(tokens.ids), tokens.mask);
  const auto width = config_.width;
  if (valid == 0) return Tensor<T>::zeros({tokens.ids.size(), width});
  const auto head = std::span<const TokenId>(tokens.ids).first(valid);
  const auto encoded = encode_embeddings(embed_source(head), Mask(valid, true));
  return ops::concat_rows<T>({encoded, Tensor<T>::zeros({tokens.ids.size() - valid, width})});
}

template <typename T>
Tensor<T> TextModel<T>::encode_embeddings(const Tensor<T> &embedded, const Mask &mask) const {
  if (embedded.rank() != 2 || embedded.cols() != config_.width || embedded.rows() != mask.size()) {
    throw DimensionError("encoder input " + numerics::shape_string(embedded.shape()) + " does not match width " +
                         std::to_string(config_.width) + " and mask length " + std::to_string(mask.size()));
  }
  const nn::AttentionMask attn_mask{mask, false};
  auto x = maybe_dropout(embedded);
  for (const auto &layer : encoder_) {
    const auto h = layer.ln_attn.forward(x);
    x = ops::add(x, maybe_dropout(layer.self_attn.forward(h, h, attn_mask)));
    x = ops::add(x, maybe_dropout(layer.ff.forward(layer.ln_ff.forward(x))));
  }
  return encoder_norm_.forward(x);
}

template <typename T>
Tensor<T> TextModel<T>::decode(const fusion::FusedDecoderInput<T> &context,
                               std::span<const TokenId> decoder_ids) const {
  const auto ctx_len = context.mask.size();
  if (!context.values.defined() || context.values.rank() != 2 || context.values.rows() != ctx_len ||
      context.values.cols() != config_.width) {
    throw DimensionError("decoder context " +
                         (context.values.defined() ? numerics::shape_string(context.values.shape())
                                                   : std::string("<undefined>")) +
                         " does not match mask length " + std::to_string(ctx_len) + " and width " +
                         std::to_string(config_.width));
  }
  if (ctx_len == 0 || ctx_len > config_.max_context_len) {
    throw DimensionError("decoder context length " + std::to_string(ctx_len) + " outside [1, " +
                         std::to_string(config_.max_context_len) + "]");
  }
  if (decoder_ids.empty() || decoder_ids.size() > config_.max_target_len) {
    throw DimensionError("decoder input length " + std::to_string(decoder_ids.size()) + " outside [1, " +
                         std::to_string(config_.max_target_len) + "]");
  }
  const auto memory = ops::add(context.values, ops::slice_rows(context_positions_, 0, ctx_len));
  const nn::AttentionMask self_mask{Mask(decoder_ids.size(), true), true};
  const nn::AttentionMask cross_mask{context.mask, false};

  auto y = ops::add(ops::embedding(token_embedding_, decoder_ids),
                    ops::slice_rows(target_positions_, 0, decoder_ids.size()));
  y = maybe_dropout(y);
  for (const auto &layer : decoder_) {
    const auto h = layer.ln_self.forward(y);
    y = ops::add(y, maybe_dropout(layer.self_attn.forward(h, h, self_mask)));
    y = ops::add(y, maybe_dropout(layer.cross_attn.forward(layer.ln_cross.forward(y), memory, cross_mask)));
    y = ops::add(y, maybe_dropout(layer.ff.forward(layer.ln_ff.forward(y))));
  }
  return ops::matmul_nt(decoder_norm_.forward(y), token_embedding_);
}

std::vector<TokenId> shift_right(std::span<const TokenId> targets) {
  std::vector<TokenId> ids(targets.size(), kPadId);
  for (std::size_t i = 1; i < targets.size(); ++i) ids[i] = targets[i - 1];
  return ids;
}

template <typename T>
Tensor<T> encoder_forward(const TextModel<T> &model, const TokenSequence &tokens) {
  return model.encode(tokens);
}

template <typename T>
Tensor<T> decoder_forward(const TextModel<T> &model, const fusion::FusedDecoderInput<T> &context,
                          const TokenSequence &target) {
  return model.decode(context, shift_right(target.ids));
}

template class TextModel<float>;
template class TextModel<double>;
template Tensor<float> encoder_forward(const TextModel<float> &, const TokenSequence &);
template Tensor<double> encoder_forward(const TextModel<double> &, const TokenSequence &);
template Tensor<float> decoder_forward(const TextModel<float> &, const fusion::FusedDecoderInput<float> &,
                                       const TokenSequence &);
template Tensor<double> decoder_forward(const TextModel<double> &, const fusion::FusedDecoderInput<double> &,
                                        const TokenSequence &);

}  // namespace grapht5::text_model
