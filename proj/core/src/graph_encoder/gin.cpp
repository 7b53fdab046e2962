#include "grapht5/graph_encoder/gin.hpp"

#include "grapht5/error.hpp"
#include "grapht5/numerics/ops.hpp"

namespace grapht5::graph_encoder {

namespace ops = numerics;

void GraphEncoderConfig::validate() const {
  if (hidden == 0 || max_nodes == 0 || output_width == 0) {
    throw ConfigError("graph encoder widths and node budget must be positive");
  }
}

namespace {

constexpr std::size_t kBondOrderCount = chem::kBondFeatureVocab[0];

template <typename T>
Tensor<T> bond_one_hot(const chem::MolGraph &graph) {
  std::vector<T> values(graph.bonds.size() * kBondOrderCount, T(0));
  for (std::size_t b = 0; b < graph.bonds.size(); ++b)
    values[b * kBondOrderCount + static_cast<std::size_t>(graph.bond_features[b][0])] = T(1);
  return Tensor<T>({graph.bonds.size(), kBondOrderCount}, std::move(values));
}

// Dense neighbour-count matrix A [N×N] and node/bond incidence B [N×E], so the
// neighbour sum is A·z + B·bond_messages.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> neighbourhood(const chem::MolGraph &graph) {
  const auto n = graph.atoms.size(), e = graph.bonds.size();
  std::vector<T> adj(n * n, T(0)), inc(n * e, T(0));
  for (std::size_t b = 0; b < e; ++b) {
    const auto i = graph.bonds[b].begin, j = graph.bonds[b].end;
    adj[i * n + j] += T(1);
    adj[j * n + i] += T(1);
    inc[i * e + b] = T(1);
    inc[j * e + b] = T(1);
  }
  return {Tensor<T>({n, n}, std::move(adj)), Tensor<T>({n, e}, std::move(inc))};
}

}  // namespace

template <typename T>
GinLayer<T>::GinLayer(ParameterStore<T> &store, const std::string &name, std::size_t hidden,
                      std::size_t index)
    : mlp_atom(store, name + ".mlp_atom", hidden, 2 * hidden, hidden),
      mlp_bond(store, name + ".mlp_bond", kBondOrderCount, hidden, hidden),
      layer_index(index) {}

template <typename T>
Tensor<T> gin_layer_forward(const GinLayer<T> &layer, const Tensor<T> &z, const chem::MolGraph &graph) {
  if (z.rank() != 2 || z.rows() != graph.atoms.size()) {
    throw DimensionError("gin_layer_forward: state has " + numerics::shape_string(z.shape()) + " for " +
                         std::to_string(graph.atoms.size()) + " atoms");
  }
  if (graph.bond_features.size() != graph.bonds.size()) {
    throw DimensionError("gin_layer_forward: bond features are not aligned with bonds");
  }
  const auto [adj, inc] = neighbourhood<T>(graph);
  const auto messages = layer.mlp_bond.forward(bond_one_hot<T>(graph));
  auto aggregated = ops::add(z, ops::matmul(adj, z));
  if (!graph.bonds.empty()) aggregated = ops::add(aggregated, ops::matmul(inc, messages));
  return layer.mlp_atom.forward(aggregated);
}

template <typename T>
GraphEncoder<T>::GraphEncoder(ParameterStore<T> &store, const std::string &name, GraphEncoderConfig config)
    : config_(config) {
  config_.validate();
  for (std::size_t f = 0; f < chem::kAtomFeatureCount; ++f) {
    atom_tables_.push_back(store.create(name + ".atom_embedding" + std::to_string(f),
                                        {chem::kAtomFeatureVocab[f], config_.hidden},
                                        numerics::Init::kUniformFanIn, config_.hidden));
  }
  for (std::size_t k = 0; k < kGinLayerCount; ++k) {
    layers_[k] = GinLayer<T>(store, name + ".layer" + std::to_string(k), config_.hidden, k);
  }
  projection_ = nn::Linear<T>(store, name + ".projection", config_.hidden, config_.output_width, false);
}

template <typename T>
Tensor<T> GraphEncoder<T>::embed_atoms(const chem::MolGraph &graph) const {
  Tensor<T> z;
  std::vector<numerics::TokenId> column(graph.atoms.size());
  for (std::size_t f = 0; f < chem::kAtomFeatureCount; ++f) {
    for (std::size_t i = 0; i < graph.atoms.size(); ++i) column[i] = graph.atom_features[i][f];
    auto part = ops::embedding(atom_tables_[f], std::span<const numerics::TokenId>(column));
    z = z.defined() ? ops::add(z, part) : part;
  }
  return z;
}

template <typename T>
GraphEmbedding<T> GraphEncoder<T>::encode(const chem::MolGraph &graph) const {
  const auto n = graph.atoms.size();
  if (n == 0) throw ContractError("encode_graph: the molecule has no atoms");
  if (graph.atom_features.size() != n) throw DimensionError("encode_graph: atom features are not aligned");

  auto z = embed_atoms(graph);
  for (const auto &layer : layers_) z = gin_layer_forward(layer, z, graph);
  auto projected = projection_.forward(z);

  const auto l = config_.max_nodes;
  GraphEmbedding<T> out;
  out.valid_len = std::min(n, l);
  out.mask.assign(l, false);
  std::fill(out.mask.begin(), out.mask.begin() + static_cast<std::ptrdiff_t>(out.valid_len), true);
  if (n >= l) {
    out.values = n == l ? projected : ops::slice_rows(projected, 0, l);
  } else {
    out.values = ops::concat_rows<T>({projected, Tensor<T>::zeros({l - n, config_.output_width})});
  }
  return out;
}

template <typename T>
GraphEmbedding<T> encode_graph(const GraphEncoder<T> &encoder, const chem::MolGraph &graph) {
  return encoder.encode(graph);
}

template struct GinLayer<float>;
template struct GinLayer<double>;
template class GraphEncoder<float>;
template class GraphEncoder<double>;
template Tensor<float> gin_layer_forward(const GinLayer<float> &, const Tensor<float> &, const chem::MolGraph &);
template Tensor<double> gin_layer_forward(const GinLayer<double> &, const Tensor<double> &,
                                          const chem::MolGraph &);
template GraphEmbedding<float> encode_graph(const GraphEncoder<float> &, const chem::MolGraph &);
template GraphEmbedding<double> encode_graph(const GraphEncoder<double> &, const chem::MolGraph &);

}  // namespace grapht5::graph_encoder
