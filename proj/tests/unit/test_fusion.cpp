#include "doctest.h"

#include <cmath>
#include <random>

#include "grapht5/error.hpp"
#include "grapht5/fusion/cross_token_attention.hpp"
#include "grapht5/numerics/grad_check.hpp"
#include "test_support.hpp"

using namespace grapht5;
using namespace grapht5::fusion;
using graph_encoder::GraphEmbedding;
using M = Tensor<double>;

namespace {

constexpr std::size_t kWidth = 4;

GraphEmbedding<double> graph_embedding(const M &values, std::size_t valid) {
  GraphEmbedding<double> g;
  g.values = values;
  g.valid_len = valid;
  g.mask.assign(values.rows(), false);
  for (std::size_t i = 0; i < valid; ++i) g.mask[i] = true;
  // pad rows of an encoder output are zero
  auto v = g.values.mutable_values();
  for (std::size_t r = valid; r < values.rows(); ++r)
    for (std::size_t c = 0; c < values.cols(); ++c) v[r * values.cols() + c] = 0.0;
  return g;
}

// Row-wise layer norm with unit gain and zero shift.
std::vector<double> layer_norm_row(std::vector<double> x, double eps = 1e-5) {
  double mean = 0.0, var = 0.0;
  for (const double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (const double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  for (auto &v : x) v = (v - mean) / std::sqrt(var + eps);
  return x;
}

std::vector<double> row_times(const M &x, std::size_t r, const M &w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t k = 0; k < w.rows(); ++k) out[j] += x(r, k) * w(k, j);
  return out;
}

struct Block {
  ParameterStore<double> store;
  CrossTokenAttention<double> cta;

  explicit Block(std::uint64_t seed, CrossTokenAttentionConfig config = {kWidth, kWidth, 2 * kWidth, 1, false})
      : store(seed), cta(store, "fusion", config) {}
};

}  // namespace

TEST_SUITE("cross_token_attention") {
  TEST_CASE("single visible key takes all the weight") {
    Block b(1);
    testing::make_identity(b.cta.mlp);
    std::mt19937_64 rng(2);
    const auto z = graph_embedding(testing::random_matrix(5, kWidth, rng), 3);
    const auto s = testing::random_matrix(4, kWidth, rng);
    const Mask smask{false, false, true, false};
    std::vector<M> probs;
    const auto out = cross_token_attention(b.cta, z, s, smask, &probs);
    REQUIRE(probs.size() == 1);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t k = 0; k < 4; ++k) CHECK(probs[0](r, k) == (k == 2 ? 1.0 : 0.0));
    const auto v_row = row_times(s, 2, b.cta.w_v);
    for (std::size_t r = 0; r < 3; ++r) {
      std::vector<double> pre(kWidth);
      for (std::size_t c = 0; c < kWidth; ++c) pre[c] = v_row[c] + z.values(r, c);
      const auto expected = layer_norm_row(pre);
      for (std::size_t c = 0; c < kWidth; ++c) CHECK(std::abs(out(r, c) - expected[c]) <= 1e-10);
    }
  }

  TEST_CASE("identical SMILES rows give uniform attention") {
    Block b(3);
    testing::make_identity(b.cta.mlp);
    std::mt19937_64 rng(4);
    const auto z = graph_embedding(testing::random_matrix(4, kWidth, rng), 4);
    const std::vector<double> row{0.3, -1.2, 0.7, 2.0};
    std::vector<double> rows;
    for (int i = 0; i < 6; ++i) rows.insert(rows.end(), row.begin(), row.end());
    const auto s = M::matrix(6, kWidth, rows);
    const Mask smask{true, true, true, true, false, false};
    std::vector<M> probs;
    const auto out = cross_token_attention(b.cta, z, s, smask, &probs);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(probs[0](r, k) - (k < 4 ? 0.25 : 0.0)) <= 1e-15);
    const auto v_row = row_times(s, 0, b.cta.w_v);
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<double> pre(kWidth);
      for (std::size_t c = 0; c < kWidth; ++c) pre[c] = v_row[c] + z.values(r, c);
      const auto expected = layer_norm_row(pre);
      for (std::size_t c = 0; c < kWidth; ++c) CHECK(std::abs(out(r, c) - expected[c]) <= 1e-10);
    }
  }

  TEST_CASE("zero value projection with identity MLP reduces to LayerNorm of Z") {
    Block b(5);
    testing::fill(b.cta.w_v, 0.0);
    testing::make_identity(b.cta.mlp);
    std::mt19937_64 rng(6);
    const auto z = graph_embedding(testing::random_matrix(6, kWidth, rng, -4, 4), 4);
    const auto s = testing::random_matrix(5, kWidth, rng);
    const auto out = cross_token_attention(b.cta, z, s, Mask{true, true, false, true, true});
    for (std::size_t r = 0; r < 6; ++r) {
      std::vector<double> zr(kWidth);
      for (std::size_t c = 0; c < kWidth; ++c) zr[c] = z.values(r, c);
      const auto expected = layer_norm_row(zr);
      for (std::size_t c = 0; c < kWidth; ++c) {
        if (r < 4) {
          CHECK(std::abs(out(r, c) - expected[c]) <= 1e-10);
        } else {
          CHECK(out(r, c) == 0.0);
        }
      }
    }
  }

  TEST_CASE("attention rows are distributions and output keeps the graph length") {
    std::mt19937_64 rng(7);
    for (std::size_t heads : {1u, 2u}) {
      Block b(8, CrossTokenAttentionConfig{kWidth, kWidth, kWidth, heads, heads == 2});
      for (std::size_t n = 1; n <= 6; ++n) {
        const auto z = graph_embedding(testing::random_matrix(5, kWidth, rng), 1 + rng() % 5);
        const auto s = testing::random_matrix(n, kWidth, rng, -3, 3);
        Mask smask(n, false);
        for (std::size_t i = 0; i < n; ++i) smask[i] = rng() % 3 != 0;
        smask[rng() % n] = true;
        std::vector<M> probs;
        const auto out = cross_token_attention(b.cta, z, s, smask, &probs);
        CHECK(out.shape() == numerics::Shape{5, kWidth});
        CHECK(probs.size() == heads);
        for (const auto &p : probs)
          for (std::size_t r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
              CHECK(p(r, k) >= 0.0);
              if (!smask[k]) CHECK(p(r, k) == 0.0);
              sum += p(r, k);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-6);
          }
      }
    }
  }

  TEST_CASE("padded SMILES and graph rows do not leak into real outputs") {
    std::mt19937_64 rng(9);
    for (const bool post : {false, true}) {
      Block b(10, CrossTokenAttentionConfig{kWidth, kWidth, kWidth, post ? 2u : 1u, post});
      const auto z = graph_embedding(testing::random_matrix(5, kWidth, rng), 3);
      const auto s = testing::random_matrix(6, kWidth, rng);
      const Mask smask{true, false, true, true, false, false};
      const auto base = cross_token_attention(b.cta, z, s, smask);
      for (int trial = 0; trial < 10; ++trial) {
        auto s2 = s.clone();
        auto z2 = z;
        z2.values = z.values.clone();
        auto sv = s2.mutable_values();
        auto zv = z2.values.mutable_values();
        for (const std::size_t r : {1u, 4u, 5u})
          for (std::size_t c = 0; c < kWidth; ++c) sv[r * kWidth + c] += 100.0 * (static_cast<double>(rng() % 7) - 3.0);
        for (std::size_t r = 3; r < 5; ++r)
          for (std::size_t c = 0; c < kWidth; ++c) zv[r * kWidth + c] = static_cast<double>(rng() % 11);
        const auto out = cross_token_attention(b.cta, z2, s2, smask);
        CHECK(testing::bit_equal(out.values(), base.values()));
      }
    }
  }

  TEST_CASE("fully masked SMILES is a contract error") {
    Block b(11);
    std::mt19937_64 rng(1);
    const auto z = graph_embedding(testing::random_matrix(3, kWidth, rng), 3);
    CHECK_THROWS_AS(cross_token_attention(b.cta, z, testing::random_matrix(2, kWidth, rng), Mask{false, false}),
                    ContractError);
  }

  TEST_CASE("width mismatches are dimension errors") {
    Block b(12);
    std::mt19937_64 rng(1);
    const auto z = graph_embedding(testing::random_matrix(3, kWidth, rng), 3);
    CHECK_THROWS_AS(cross_token_attention(b.cta, z, testing::random_matrix(2, kWidth + 1, rng), Mask{true, true}),
                    DimensionError);
    CHECK_THROWS_AS(cross_token_attention(b.cta, z, testing::random_matrix(2, kWidth, rng), Mask{true}),
                    DimensionError);
    const auto narrow = graph_embedding(testing::random_matrix(3, kWidth - 1, rng), 3);
    CHECK_THROWS_AS(cross_token_attention(b.cta, narrow, testing::random_matrix(2, kWidth, rng), Mask{true, true}),
                    DimensionError);
  }

  TEST_CASE("parameter names") {
    Block b(13);
    for (const auto *name : {"fusion.w_q", "fusion.w_k", "fusion.w_v", "fusion.ln.gamma", "fusion.mlp.fc1.weight"})
      CHECK(b.store.find(name) != nullptr);
  }

  TEST_CASE("full block gradients pass the finite-difference check") {
    std::mt19937_64 rng(14);
    for (const bool post : {false, true}) {
      Block b(15, CrossTokenAttentionConfig{kWidth, post ? 6u : 3u, 5, post ? 2u : 1u, post});
      const auto z = graph_embedding(testing::random_matrix(4, kWidth, rng), 3);
      const auto s = testing::random_matrix(5, kWidth, rng);
      const auto w = testing::random_matrix(4, kWidth, rng);
      const Mask smask{true, true, false, true, false};
      const auto report = numerics::grad_check<double>(
          [&] { return numerics::sum(numerics::mul(cross_token_attention(b.cta, z, s, smask), w)); },
          b.store.parameters());
      CHECK(report.passed);
      CHECK(report.max_relative_error < 1e-4);
    }
  }
}

TEST_SUITE("mean_pool") {
  TEST_CASE("two valid rows") {
    const auto pooled = mean_pool(M::matrix(3, 2, {1, 3, 5, 7, 0, 0}), Mask{true, true, false});
    CHECK(pooled.shape() == numerics::Shape{1, 2});
    CHECK(pooled(0, 0) == 3.0);
    CHECK(pooled(0, 1) == 5.0);
  }

  TEST_CASE("identical rows pool to that row") {
    const auto pooled = mean_pool(M::matrix(3, 2, {0.1, -2, 0.1, -2, 0.1, -2}), Mask{true, true, true});
    CHECK(std::abs(pooled(0, 0) - 0.1) <= 1e-16);
    CHECK(pooled(0, 1) == -2.0);
  }

  TEST_CASE("single valid row among pads is exact") {
    const auto pooled = mean_pool(M::matrix(3, 2, {9, 9, 0.123, 4.5, 9, 9}), Mask{false, true, false});
    CHECK(pooled(0, 0) == 0.123);
    CHECK(pooled(0, 1) == 4.5);
  }

  TEST_CASE("empty mask is a contract error") {
    CHECK_THROWS_AS(mean_pool(M::zeros({2, 2}), Mask{false, false}), ContractError);
  }
}

TEST_SUITE("assemble_decoder_input") {
  std::mt19937_64 rng(21);
  const auto prompt = ContextSegment<double>{testing::random_matrix(3, kWidth, rng), Mask{true, true, false}};
  const auto pooled = testing::random_matrix(1, kWidth, rng);
  const auto graph = ContextSegment<double>{testing::random_matrix(4, kWidth, rng), Mask{true, true, true, false}};
  const auto smiles =
      ContextSegment<double>{testing::random_matrix(5, kWidth, rng), Mask{true, false, true, false, false}};

  TEST_CASE("full layout follows prompt, pooled, graph, smiles") {
    const auto fused = assemble_decoder_input<double>(prompt, pooled, graph, smiles);
    CHECK(fused.length() == 3 + 1 + 4 + 5);
    CHECK(fused.values.shape() == numerics::Shape{13, kWidth});
    CHECK(fused.layout.prompt_offset == 0);
    CHECK(fused.layout.pooled_offset == 3);
    CHECK(fused.layout.graph_offset == 4);
    CHECK(fused.layout.smiles_offset == 8);
    CHECK(fused.layout.total() == 13);
    CHECK(numerics::count_true(fused.mask) == 2 + 1 + 3 + 2);
    CHECK(fused.mask[3]);
    const std::pair<const M *, std::size_t> parts[] = {
        {&prompt.values, 0}, {&pooled, 3}, {&graph.values, 4}, {&smiles.values, 8}};
    for (const auto &[seg, offset] : parts)
      for (std::size_t r = 0; r < seg->rows(); ++r)
        for (std::size_t c = 0; c < kWidth; ++c) CHECK(fused.values(offset + r, c) == (*seg)(r, c));
  }

  TEST_CASE("no-graph variant is prompt then smiles") {
    const auto fused = assemble_decoder_input<double>(prompt, std::nullopt, std::nullopt, smiles);
    CHECK(fused.length() == 3 + 5);
    CHECK(fused.layout.pooled_length == 0);
    CHECK(fused.layout.graph_length == 0);
    CHECK(fused.layout.smiles_offset == 3);
  }

  TEST_CASE("no-smiles variant ends after the graph") {
    const auto fused = assemble_decoder_input<double>(prompt, pooled, graph, std::nullopt);
    CHECK(fused.length() == 3 + 1 + 4);
    CHECK(fused.layout.smiles_offset == 8);
    CHECK(fused.layout.smiles_length == 0);
  }

  TEST_CASE("width and mask mismatches are dimension errors") {
    const auto wide = ContextSegment<double>{testing::random_matrix(2, kWidth + 1, rng), Mask{true, true}};
    CHECK_THROWS_AS(assemble_decoder_input<double>(prompt, pooled, graph, wide), DimensionError);
    const auto bad_mask = ContextSegment<double>{testing::random_matrix(2, kWidth, rng), Mask{true}};
    CHECK_THROWS_AS(assemble_decoder_input<double>(prompt, pooled, bad_mask, smiles), DimensionError);
  }
}
