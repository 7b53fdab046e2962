#pragma once

#include <random>
#include <string>
#include <vector>

#include "grapht5/numerics/ops.hpp"
#include "grapht5/numerics/parameter.hpp"

namespace grapht5::nn {

using numerics::Mask;
using numerics::ParameterStore;
using numerics::Tensor;

// y = x·W (+ b). W is [in×out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when the layer has no bias

  Linear() = default;
  Linear(ParameterStore<T> &store, const std::string &name, std::size_t in, std::size_t out,
         bool with_bias = true);

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  Tensor<T> forward(const Tensor<T> &x) const;
};

// Two linear layers with a ReLU between them.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(ParameterStore<T> &store, const std::string &name, std::size_t in, std::size_t hidden,
      std::size_t out);

  Tensor<T> forward(const Tensor<T> &x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(ParameterStore<T> &store, const std::string &name, std::size_t width);

  Tensor<T> forward(const Tensor<T> &x) const;
};

struct AttentionMask {
  Mask key_valid;
  bool causal = false;
};

// Multi-head scaled dot-product attention with bias-free projections.
template <typename T>
struct MultiHeadAttention {
  Linear<T> w_q;
  Linear<T> w_k;
  Linear<T> w_v;
  Linear<T> w_o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T> &store, const std::string &name, std::size_t width,
                     std::size_t heads);

  // queries [q×d], keys_values [k×d] -> [q×d]. When probs is non-null, the
  // per-head attention matrices are appended to it.
  Tensor<T> forward(const Tensor<T> &queries, const Tensor<T> &keys_values, const AttentionMask &mask,
                    std::vector<Tensor<T>> *probs = nullptr) const;
};

// softmax(Q·Kᵀ / sqrt(d_k)) · V for a single head, masked per AttentionMask.
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T> &q, const Tensor<T> &k, const Tensor<T> &v,
                                       const AttentionMask &mask, Tensor<T> *probs = nullptr);

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct Mlp<float>;
extern template struct Mlp<double>;
extern template struct LayerNorm<float>;
extern template struct LayerNorm<double>;
extern template struct MultiHeadAttention<float>;
extern template struct MultiHeadAttention<double>;

}  // namespace grapht5::nn
