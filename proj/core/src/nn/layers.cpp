#include "grapht5/nn/layers.hpp"

#include <cmath>

#include "grapht5/error.hpp"

namespace grapht5::nn {

using numerics::Init;

template <typename T>
Linear<T>::Linear(ParameterStore<T> &store, const std::string &name, std::size_t in, std::size_t out,
                  bool with_bias) {
  weight = store.create(name + ".weight", {in, out}, Init::kUniformFanIn, in);
  if (with_bias) bias = store.create(name + ".bias", {1, out}, Init::kZeros);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T> &x) const {
  auto y = numerics::matmul(x, weight);
  return bias.defined() ? numerics::add_row(y, bias) : y;
}

template <typename T>
Mlp<T>::Mlp(ParameterStore<T> &store, const std::string &name, std::size_t in, std::size_t hidden,
            std::size_t out)
    : fc1(store, name + ".fc1", in, hidden), fc2(store, name + ".fc2", hidden, out) {}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T> &x) const {
  return fc2.forward(numerics::relu(fc1.forward(x)));
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T> &store, const std::string &name, std::size_t width) {
  gamma = store.create(name + ".gamma", {1, width}, Init::kOnes);
  beta = store.create(name + ".beta", {1, width}, Init::kZeros);
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T> &x) const {
  return numerics::layer_norm(x, gamma, beta, eps);
}

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T> &q, const Tensor<T> &k, const Tensor<T> &v,
                                       const AttentionMask &mask, Tensor<T> *probs) {
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(q.cols()));
  auto scores = numerics::scale(numerics::matmul_nt(q, k), inv_sqrt);
  auto p = numerics::masked_softmax(scores, mask.key_valid, mask.causal);
  if (probs) *probs = p;
  return numerics::matmul(p, v);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T> &store, const std::string &name,
                                          std::size_t width, std::size_t heads_)
    : w_q(store, name + ".w_q", width, width, false),
      w_k(store, name + ".w_k", width, width, false),
      w_v(store, name + ".w_v", width, width, false),
      w_o(store, name + ".w_o", width, width, false),
      heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T> &queries, const Tensor<T> &keys_values,
                                         const AttentionMask &mask, std::vector<Tensor<T>> *probs) const {
  const auto q = w_q.forward(queries);
  const auto k = w_k.forward(keys_values);
  const auto v = w_v.forward(keys_values);
  if (heads == 1) {
    Tensor<T> p;
    auto out = scaled_dot_product_attention(q, k, v, mask, probs ? &p : nullptr);
    if (probs) probs->push_back(p);
    return w_o.forward(out);
  }
  const std::size_t head_dim = q.cols() / heads;
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
    Tensor<T> p;
    outputs.push_back(scaled_dot_product_attention(numerics::slice_cols(q, c0, c1),
                                                   numerics::slice_cols(k, c0, c1),
                                                   numerics::slice_cols(v, c0, c1), mask,
                                                   probs ? &p : nullptr));
    if (probs) probs->push_back(p);
  }
  return w_o.forward(numerics::concat_cols(outputs));
}

template struct Linear<float>;
template struct Linear<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template Tensor<float> scaled_dot_product_attention(const Tensor<float> &, const Tensor<float> &,
                                                    const Tensor<float> &, const AttentionMask &,
                                                    Tensor<float> *);
template Tensor<double> scaled_dot_product_attention(const Tensor<double> &, const Tensor<double> &,
                                                     const Tensor<double> &, const AttentionMask &,
                                                     Tensor<double> *);

}  // namespace grapht5::nn
