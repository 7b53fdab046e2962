#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grapht5/fusion/decoder_input.hpp"
#include "grapht5/graph_encoder/gin.hpp"
#include "grapht5/nn/layers.hpp"

namespace grapht5::fusion {

using numerics::Mask;
using numerics::ParameterStore;
using numerics::Tensor;

struct CrossTokenAttentionConfig {
  std::size_t width = 256;       // d, shared by graph and SMILES embeddings (also d_v)
  std::size_t key_width = 256;   // d_k
  std::size_t mlp_hidden = 256;
  std::size_t heads = 1;
  bool post_self_attention = false;

  void validate() const;
};

// Graph nodes query SMILES tokens:
//   Q = Z·W_Q, K = S*·W_K, V = S*·W_V
//   H = softmax(Q·Kᵀ / sqrt(d_k)) · V
//   H' = LayerNorm(H + Z)
//   O_G = MLP(H')
template <typename T>
struct CrossTokenAttention {
  CrossTokenAttentionConfig config;
  Tensor<T> w_q;  // [d×d_k]
  Tensor<T> w_k;  // [d×d_k]
  Tensor<T> w_v;  // [d×d]
  nn::LayerNorm<T> ln;
  nn::Mlp<T> mlp;
  // Present only with post_self_attention.
  std::optional<nn::MultiHeadAttention<T>> post_attn;
  std::optional<nn::LayerNorm<T>> post_ln;

  CrossTokenAttention() = default;
  CrossTokenAttention(ParameterStore<T> &store, const std::string &name, CrossTokenAttentionConfig config);
};

// Returns O_G [l×d] with graph pad rows zeroed. ContractError when no SMILES
// key is unmasked. When probs is non-null it receives the attention
// matrices (one per head).
template <typename T>
Tensor<T> cross_token_attention(const CrossTokenAttention<T> &block, const graph_encoder::GraphEmbedding<T> &graph,
                                const Tensor<T> &smiles, const Mask &smiles_mask,
                                std::vector<Tensor<T>> *probs = nullptr);

// Mean over rows with a set mask bit -> [1×d].
template <typename T>
Tensor<T> mean_pool(const Tensor<T> &o_g, const Mask &mask);

template <typename T>
struct ContextSegment {
  Tensor<T> values;
  Mask mask;
};

// Concatenates [P, O_Gpool, O_G, S*] in that order; absent segments are
// skipped. The pooled vector always contributes one unmasked row.
template <typename T>
FusedDecoderInput<T> assemble_decoder_input(const ContextSegment<T> &prompt, const std::optional<Tensor<T>> &pooled,
                                            const std::optional<ContextSegment<T>> &graph,
                                            const std::optional<ContextSegment<T>> &smiles);

extern template struct CrossTokenAttention<float>;
extern template struct CrossTokenAttention<double>;

}  // namespace grapht5::fusion
