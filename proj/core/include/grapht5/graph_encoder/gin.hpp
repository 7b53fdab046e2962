#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "grapht5/chem/smiles.hpp"
#include "grapht5/nn/layers.hpp"

namespace grapht5::graph_encoder {

using numerics::Mask;
using numerics::ParameterStore;
using numerics::Tensor;

inline constexpr std::size_t kGinLayerCount = 5;

struct GraphEncoderConfig {
  std::size_t hidden = 128;       // d_g
  std::size_t max_nodes = 64;     // l, the graph token budget
  std::size_t output_width = 256; // d, must equal the text model width

  void validate() const;
};

// One message-passing step:
//   z'_i = MLP_atom( z_i + Σ_{j ∈ N(i)} ( z_j + MLP_bond(e_ij) ) )
template <typename T>
struct GinLayer {
  nn::Mlp<T> mlp_atom;  // d_g -> 2·d_g -> d_g
  nn::Mlp<T> mlp_bond;  // one-hot bond order -> d_g -> d_g
  std::size_t layer_index = 0;

  GinLayer() = default;
  GinLayer(ParameterStore<T> &store, const std::string &name, std::size_t hidden, std::size_t index);
};

template <typename T>
Tensor<T> gin_layer_forward(const GinLayer<T> &layer, const Tensor<T> &z, const chem::MolGraph &graph);

template <typename T>
struct GraphEmbedding {
  Tensor<T> values;  // [l×d]; rows >= valid_len are exactly zero
  std::size_t valid_len = 0;
  Mask mask;  // true on the first valid_len rows
};

template <typename T>
class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(ParameterStore<T> &store, const std::string &name, GraphEncoderConfig config);

  // Embeds atom features (sum of one table per feature field), runs the five
  // GIN layers, projects to d, then truncates to the first l atoms in index
  // order or zero-pads up to l.
  GraphEmbedding<T> encode(const chem::MolGraph &graph) const;

  // z^(0): per-field atom embeddings summed, [N×d_g].
  Tensor<T> embed_atoms(const chem::MolGraph &graph) const;

  const GraphEncoderConfig &config() const { return config_; }
  std::array<GinLayer<T>, kGinLayerCount> &layers() { return layers_; }
  const std::array<GinLayer<T>, kGinLayerCount> &layers() const { return layers_; }
  const nn::Linear<T> &projection() const { return projection_; }

 private:
  GraphEncoderConfig config_;
  std::vector<Tensor<T>> atom_tables_;
  std::array<GinLayer<T>, kGinLayerCount> layers_;
  nn::Linear<T> projection_;
};

// Free-function form of GraphEncoder::encode.
template <typename T>
GraphEmbedding<T> encode_graph(const GraphEncoder<T> &encoder, const chem::MolGraph &graph);

extern template struct GinLayer<float>;
extern template struct GinLayer<double>;
extern template class GraphEncoder<float>;
extern template class GraphEncoder<double>;

}  // namespace grapht5::graph_encoder
