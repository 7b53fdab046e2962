#include "grapht5/fusion/cross_token_attention.hpp"

#include <cmath>

#include "grapht5/error.hpp"

namespace grapht5::fusion {

namespace ops = numerics;

void CrossTokenAttentionConfig::validate() const {
  if (width == 0 || key_width == 0 || mlp_hidden == 0) throw ConfigError("cross-token attention widths must be positive");
  if (heads == 0 || key_width % heads != 0 || width % heads != 0) {
    throw ConfigError("cross-token attention widths must divide evenly into " + std::to_string(heads) + " heads");
  }
}

template <typename T>
CrossTokenAttention<T>::CrossTokenAttention(ParameterStore<T> &store, const std::string &name,
                                            CrossTokenAttentionConfig cfg)
    : config(cfg) {
  config.validate();
  const auto d = config.width, dk = config.key_width;
  w_q = store.create(name + ".w_q", {d, dk}, ops::Init::kUniformFanIn, d);
  w_k = store.create(name + ".w_k", {d, dk}, ops::Init::kUniformFanIn, d);
  w_v = store.create(name + ".w_v", {d, d}, ops::Init::kUniformFanIn, d);
  ln = nn::LayerNorm<T>(store, name + ".ln", d);
  mlp = nn::Mlp<T>(store, name + ".mlp", d, config.mlp_hidden, d);
  if (config.post_self_attention) {
    post_attn.emplace(store, name + ".post_attn", d, config.heads);
    post_ln.emplace(store, name + ".post_ln", d);
  }
}

template <typename T>
Tensor<T> cross_token_attention(const CrossTokenAttention<T> &block, const graph_encoder::GraphEmbedding<T> &graph,
                                const Tensor<T> &smiles, const Mask &smiles_mask, std::vector<Tensor<T>> *probs) {
  const auto d = block.config.width;
  const auto &z = graph.values;
  if (z.rank() != 2 || z.cols() != d || z.rows() != graph.mask.size()) {
    throw DimensionError("cross_token_attention: graph embedding " + ops::shape_string(z.shape()) +
                         " does not match width " + std::to_string(d));
  }
  if (smiles.rank() != 2 || smiles.cols() != d || smiles.rows() != smiles_mask.size()) {
    throw DimensionError("cross_token_attention: SMILES embedding " + ops::shape_string(smiles.shape()) +
                         " does not match width " + std::to_string(d) + " and mask length " +
                         std::to_string(smiles_mask.size()));
  }
  if (ops::count_true(smiles_mask) == 0) {
    throw ContractError("cross_token_attention: every SMILES key is masked; attention is undefined");
  }
  const nn::AttentionMask key_mask{smiles_mask, false};
  const auto q = ops::matmul(z, block.w_q);
  const auto k = ops::matmul(smiles, block.w_k);
  const auto v = ops::matmul(smiles, block.w_v);

  Tensor<T> h;
  const auto heads = block.config.heads;
  if (heads == 1) {
    Tensor<T> p;
    h = nn::scaled_dot_product_attention(q, k, v, key_mask, probs ? &p : nullptr);
    if (probs) probs->push_back(p);
  } else {
    const auto qk_head = block.config.key_width / heads, v_head = d / heads;
    std::vector<Tensor<T>> parts;
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor<T> p;
      parts.push_back(nn::scaled_dot_product_attention(
          ops::slice_cols(q, i * qk_head, (i + 1) * qk_head), ops::slice_cols(k, i * qk_head, (i + 1) * qk_head),
          ops::slice_cols(v, i * v_head, (i + 1) * v_head), key_mask, probs ? &p : nullptr));
      if (probs) probs->push_back(p);
    }
    h = ops::concat_cols(parts);
  }

  auto o_g = block.mlp.forward(block.ln.forward(ops::add(h, z)));
  if (block.post_attn) {
    const nn::AttentionMask graph_mask{graph.mask, false};
    o_g = block.post_ln->forward(ops::add(o_g, block.post_attn->forward(o_g, o_g, graph_mask)));
  }
  return ops::zero_rows(o_g, graph.mask);
}

template <typename T>
Tensor<T> mean_pool(const Tensor<T> &o_g, const Mask &mask) {
  return ops::masked_mean_rows(o_g, mask);
}

template <typename T>
FusedDecoderInput<T> assemble_decoder_input(const ContextSegment<T> &prompt, const std::optional<Tensor<T>> &pooled,
                                            const std::optional<ContextSegment<T>> &graph,
                                            const std::optional<ContextSegment<T>> &smiles) {
  if (!prompt.values.defined() || prompt.values.rank() != 2) throw DimensionError("prompt segment must be a matrix");
  const auto d = prompt.values.cols();
  FusedDecoderInput<T> out;
  std::vector<Tensor<T>> parts;
  auto append = [&](const Tensor<T> &values, const Mask &mask, const char *what, std::size_t &offset,
                    std::size_t &length) {
    if (values.rank() != 2 || values.cols() != d) {
      throw DimensionError(std::string("assemble_decoder_input: ") + what + " segment " +
                           ops::shape_string(values.shape()) + " does not have width " + std::to_string(d));
    }
    if (mask.size() != values.rows()) {
      throw DimensionError(std::string("assemble_decoder_input: ") + what + " mask is not aligned with its rows");
    }
    offset = out.mask.size();
    length = values.rows();
    parts.push_back(values);
    out.mask.insert(out.mask.end(), mask.begin(), mask.end());
  };
  auto skip = [&](std::size_t &offset, std::size_t &length) {
    offset = out.mask.size();
    length = 0;
  };

  append(prompt.values, prompt.mask, "prompt", out.layout.prompt_offset, out.layout.prompt_length);
  if (pooled) {
    if (pooled->rank() != 2 || pooled->rows() != 1) throw DimensionError("pooled graph vector must be [1×d]");
    append(*pooled, Mask{true}, "pooled", out.layout.pooled_offset, out.layout.pooled_length);
  } else {
    skip(out.layout.pooled_offset, out.layout.pooled_length);
  }
  if (graph) {
    append(graph->values, graph->mask, "graph", out.layout.graph_offset, out.layout.graph_length);
  } else {
    skip(out.layout.graph_offset, out.layout.graph_length);
  }
  if (smiles) {
    append(smiles->values, smiles->mask, "SMILES", out.layout.smiles_offset, out.layout.smiles_length);
  } else {
    skip(out.layout.smiles_offset, out.layout.smiles_length);
  }
  out.values = parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
  return out;
}

template struct CrossTokenAttention<float>;
template struct CrossTokenAttention<double>;

#define GRAPHT5_INSTANTIATE_FUSION(T)                                                                        \
  template Tensor<T> cross_token_attention(const CrossTokenAttention<T> &,                                   \
                                           const graph_encoder::GraphEmbedding<T> &, const Tensor<T> &,      \
                                           const Mask &, std::vector<Tensor<T>> *);                          \
  template Tensor<T> mean_pool(const Tensor<T> &, const Mask &);                                             \
  template FusedDecoderInput<T> assemble_decoder_input(const ContextSegment<T> &, const std::optional<Tensor<T>> &, \
                                                       const std::optional<ContextSegment<T>> &,             \
                                                       const std::optional<ContextSegment<T>> &);

GRAPHT5_INSTANTIATE_FUSION(float)
GRAPHT5_INSTANTIATE_FUSION(double)

#undef GRAPHT5_INSTANTIATE_FUSION

}  // namespace grapht5::fusion
