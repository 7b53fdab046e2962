#include "doctest.h"

#include <random>

#include "grapht5/chem/smiles.hpp"
#include "grapht5/error.hpp"
#include "grapht5/graph_encoder/gin.hpp"
#include "grapht5/numerics/grad_check.hpp"
#include "test_support.hpp"

using namespace grapht5;
using namespace grapht5::graph_encoder;
using numerics::Init;
using M = Tensor<double>;

namespace {

struct Fixture {
  ParameterStore<double> store{7};
  GraphEncoder<double> encoder;

  explicit Fixture(std::size_t hidden = 6, std::size_t max_nodes = 16, std::size_t width = 5)
      : encoder(store, "graph_encoder", GraphEncoderConfig{hidden, max_nodes, width}) {}
};

// relu(x·W1 + b1)·W2 + b2 written out with plain loops.
std::vector<double> mlp_oracle(const nn::Mlp<double> &mlp, const std::vector<double> &x) {
  const auto in = mlp.fc1.in_features(), hid = mlp.fc1.out_features(), out = mlp.fc2.out_features();
  std::vector<double> h(hid, 0.0), y(out, 0.0);
  for (std::size_t j = 0; j < hid; ++j) {
    double s = mlp.fc1.bias.values()[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * mlp.fc1.weight.values()[i * hid + j];
    h[j] = s > 0 ? s : 0.0;
  }
  for (std::size_t j = 0; j < out; ++j) {
    double s = mlp.fc2.bias.values()[j];
    for (std::size_t i = 0; i < hid; ++i) s += h[i] * mlp.fc2.weight.values()[i * out + j];
    y[j] = s;
  }
  return y;
}

// One message-passing step evaluated bond by bond.
std::vector<double> gin_oracle(const GinLayer<double> &layer, const M &z, const chem::MolGraph &g) {
  const auto n = z.rows(), d = z.cols();
  std::vector<std::vector<double>> agg(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) agg[i][c] = z(i, c);
  for (const auto &b : g.bonds) {
    std::vector<double> onehot(chem::kBondFeatureVocab[0], 0.0);
    onehot[static_cast<std::size_t>(b.order)] = 1.0;
    const auto msg = mlp_oracle(layer.mlp_bond, onehot);
    for (std::size_t c = 0; c < d; ++c) {
      agg[b.begin][c] += z(b.end, c) + msg[c];
      agg[b.end][c] += z(b.begin, c) + msg[c];
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = mlp_oracle(layer.mlp_atom, agg[i]);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace

TEST_SUITE("gin_layer") {
  TEST_CASE("isolated node with identity atom MLP is unchanged") {
    Fixture f(4);
    auto &layer = f.encoder.layers()[0];
    testing::make_identity(layer.mlp_atom);
    const auto g = chem::smiles_to_graph("C");
    const auto z = M::matrix(1, 4, {0.5, -1.25, 3.0, 0.0});
    CHECK(testing::bit_equal(gin_layer_forward(layer, z, g).values(), z.values()));
  }

  TEST_CASE("two bonded nodes exchange states") {
    Fixture f(3);
    auto &layer = f.encoder.layers()[1];
    testing::make_identity(layer.mlp_atom);
    testing::make_zero(layer.mlp_bond);
    const auto g = chem::smiles_to_graph("CO");
    const auto z = M::matrix(2, 3, {1, 2, 3, 10, 20, 30});
    const auto out = gin_layer_forward(layer, z, g);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(out(0, c) == z(0, c) + z(1, c));
      CHECK(out(1, c) == z(1, c) + z(0, c));
    }
  }

  TEST_CASE("triangle sums own state with both neighbours") {
    Fixture f(3);
    auto &layer = f.encoder.layers()[2];
    testing::make_identity(layer.mlp_atom);
    testing::make_zero(layer.mlp_bond);
    const auto g = chem::smiles_to_graph("C1CC1");
    const auto z = M::matrix(3, 3, {1, 0, -2, 0.5, 4, 1, -3, 2, 7});
    const auto out = gin_layer_forward(layer, z, g);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        const double expected = z(0, c) + z(1, c) + z(2, c);
        CHECK(std::abs(out(i, c) - expected) <= 1e-10);
      }
  }

  TEST_CASE("random layers match the bond-loop oracle") {
    std::mt19937_64 rng(31);
    Fixture f(5);
    for (int trial = 0; trial < 40; ++trial) {
      const auto g = testing::random_molecule(rng, 10);
      const auto z = testing::random_matrix(g.atom_count(), 5, rng);
      const auto &layer = f.encoder.layers()[static_cast<std::size_t>(trial) % kGinLayerCount];
      CHECK(testing::max_abs_diff(gin_layer_forward(layer, z, g).values(), gin_oracle(layer, z, g)) <= 1e-12);
    }
  }

  TEST_CASE("bond messages depend on bond order") {
    Fixture f(4);
    const auto &layer = f.encoder.layers()[0];
    const auto z = M::zeros({2, 4});
    const auto single = gin_layer_forward(layer, z, chem::smiles_to_graph("CC"));
    const auto triple = gin_layer_forward(layer, z, chem::smiles_to_graph("C#C"));
    CHECK(testing::max_abs_diff(single.values(), triple.values()) > 0.0);
  }

  TEST_CASE("row count mismatch is a dimension error") {
    Fixture f(4);
    CHECK_THROWS_AS(gin_layer_forward(f.encoder.layers()[0], M::zeros({2, 4}), chem::smiles_to_graph("CCC")),
                    DimensionError);
  }
}

TEST_SUITE("encode_graph") {
  TEST_CASE("two atoms pad to four rows") {
    Fixture f(6, 4, 5);
    const auto e = encode_graph(f.encoder, chem::smiles_to_graph("CO"));
    CHECK(e.values.shape() == numerics::Shape{4, 5});
    CHECK(e.valid_len == 2);
    CHECK(e.mask == Mask{true, true, false, false});
    for (std::size_t r = 2; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c) CHECK(e.values(r, c) == 0.0);
  }

  TEST_CASE("ten atoms truncate to the first four in index order") {
    Fixture f(6, 4, 5);
    Fixture big(6, 16, 5);
    const auto g = chem::smiles_to_graph("CCCCCCCCCO");
    const auto e = f.encoder.encode(g);
    CHECK(e.valid_len == 4);
    CHECK(e.mask == Mask{true, true, true, true});
    // Same seed and widths, so only the length budget differs.
    const auto full = big.encoder.encode(g);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c) CHECK(e.values(r, c) == full.values(r, c));
  }

  TEST_CASE("output shape is fixed for every size") {
    Fixture f(4, 8, 3);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
      const auto e = f.encoder.encode(testing::random_molecule(rng, 14));
      CHECK(e.values.shape() == numerics::Shape{8, 3});
      CHECK(numerics::count_true(e.mask) == e.valid_len);
    }
  }

  TEST_CASE("relabeling permutes the output rows") {
    Fixture f(6, 16, 5);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 40; ++trial) {
      const auto g = testing::random_molecule(rng, 16);
      const auto perm = testing::random_permutation(g.atom_count(), rng);
      const auto a = f.encoder.encode(g);
      const auto b = f.encoder.encode(chem::relabel_atoms(g, perm));
      double worst = 0.0;
      for (std::size_t i = 0; i < g.atom_count(); ++i)
        for (std::size_t c = 0; c < 5; ++c) worst = std::max(worst, std::abs(a.values(i, c) - b.values(perm[i], c)));
      CHECK(worst <= 1e-10);
    }
  }

  TEST_CASE("zero parameters give a zero output") {
    Fixture f;
    f.store.fill_zero();
    const auto e = f.encoder.encode(chem::smiles_to_graph("c1ccccc1O"));
    for (const double v : e.values.values()) CHECK(v == 0.0);
  }

  TEST_CASE("parameter names follow the checkpoint convention") {
    Fixture f;
    for (std::size_t k = 0; k < kGinLayerCount; ++k) {
      const auto prefix = "graph_encoder.layer" + std::to_string(k);
      CHECK(f.store.find(prefix + ".mlp_atom.fc1.weight") != nullptr);
      CHECK(f.store.find(prefix + ".mlp_bond.fc2.bias") != nullptr);
    }
    CHECK(f.store.find("graph_encoder.projection.weight") != nullptr);
  }

  TEST_CASE("empty graph is a contract error") {
    Fixture f;
    CHECK_THROWS_AS(f.encoder.encode(chem::MolGraph{}), ContractError);
  }

  TEST_CASE("gradients pass the finite-difference check") {
    Fixture f(3, 4, 2);
    std::mt19937_64 rng(12);
    const auto g = chem::smiles_to_graph("C1CC1(=O)N");
    const auto w = testing::random_matrix(4, 2, rng);
    const auto report = numerics::grad_check<double>(
        [&] { return numerics::sum(numerics::mul(f.encoder.encode(g).values, w)); }, f.store.parameters());
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-4);
  }
}
