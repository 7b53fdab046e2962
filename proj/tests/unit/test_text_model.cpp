#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>

#include "grapht5/error.hpp"
#include "grapht5/numerics/grad_check.hpp"
#include "grapht5/text_model/generate.hpp"
#include "grapht5/text_model/transformer.hpp"
#include "grapht5/text_model/vocabulary.hpp"
#include "test_support.hpp"

using namespace grapht5;
using namespace grapht5::text_model;
using fusion::FusedDecoderInput;
using M = Tensor<double>;

namespace {

TextModelConfig tiny_config(std::size_t vocab) {
  TextModelConfig c;
  c.vocab_size = vocab;
  c.width = 8;
  c.heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.ff_width = 16;
  c.max_source_len = 10;
  c.max_target_len = 8;
  c.max_context_len = 16;
  return c;
}

FusedDecoderInput<double> random_context(std::size_t rows, std::size_t width, std::mt19937_64 &rng,
                                         std::size_t masked_tail = 0) {
  FusedDecoderInput<double> ctx;
  ctx.values = testing::random_matrix(rows, width, rng);
  ctx.mask.assign(rows, true);
  for (std::size_t i = rows - masked_tail; i < rows; ++i) ctx.mask[i] = false;
  ctx.layout.prompt_length = rows;
  return ctx;
}

// Deterministic pseudo-random scores keyed on the generated prefix.
NextTokenScores hashed_scores(std::uint64_t seed, std::size_t vocab) {
  return [seed, vocab](std::span<const TokenId> prefix) {
    std::uint64_t h = seed;
    for (const auto id : prefix) h = h * 1000003u + static_cast<std::uint64_t>(id) + 1;
    std::mt19937_64 rng(h);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    std::vector<double> s(vocab);
    for (auto &x : s) x = dist(rng);
    return s;
  };
}

struct Scored {
  std::vector<TokenId> ids;
  double normalized;
};

// Every sequence the decoder could emit, scored by mean log-probability.
void enumerate_all(const NextTokenScores &next, std::size_t max_len, std::vector<TokenId> &prefix, double sum,
                   std::vector<Scored> &out) {
  const auto lp = log_softmax(next(prefix));
  out.push_back(Scored{prefix, (sum + lp[kEosId]) / static_cast<double>(prefix.size() + 1)});
  for (std::size_t t = 0; t < lp.size(); ++t) {
    if (static_cast<TokenId>(t) == kEosId) continue;
    prefix.push_back(static_cast<TokenId>(t));
    if (prefix.size() == max_len) {
      out.push_back(Scored{prefix, (sum + lp[t]) / static_cast<double>(prefix.size())});
    } else {
      enumerate_all(next, max_len, prefix, sum + lp[t], out);
    }
    prefix.pop_back();
  }
}

}  // namespace

TEST_SUITE("vocabulary") {
  TEST_CASE("single possible merge is learned") {
    const auto v = Vocabulary::build({"aaaa"}, kReservedCount + 2);
    CHECK(v.base_size() == kReservedCount + 1);
    REQUIRE(v.merges().size() == 1);
    CHECK(v.merges()[0] == std::pair<std::string, std::string>{"a", "a"});
    CHECK(v.contains("aa"));
  }

  TEST_CASE("most frequent pair wins") {
    const auto v = Vocabulary::build({"ab", "ab", "cd"}, kReservedCount + 5);
    REQUIRE(v.merges().size() == 1);
    CHECK(v.token(static_cast<TokenId>(v.size() - 1)) == "ab");
  }

  TEST_CASE("frequency ties break lexicographically") {
    const auto v = Vocabulary::build({"cd", "ab"}, kReservedCount + 5);
    REQUIRE(v.merges().size() == 1);
    CHECK(v.merges()[0].first == "a");
  }

  TEST_CASE("target equal to the base gives a character vocabulary") {
    const auto v = Vocabulary::build({"hello world"}, kReservedCount + 8);
    CHECK(v.merges().empty());
    CHECK(v.size() == v.base_size());
    CHECK(v.token(kPadId) != v.token(kEosId));
  }

  TEST_CASE("target below the base is a config error") {
    CHECK_THROWS_AS(Vocabulary::build({"abc"}, kReservedCount + 2), ConfigError);
  }

  TEST_CASE("bytes appear in ascending order after the reserved ids") {
    const auto v = Vocabulary::build({"cab"}, kReservedCount + 3);
    CHECK(v.token(3) == "a");
    CHECK(v.token(4) == "b");
    CHECK(v.token(5) == "c");
  }

  TEST_CASE("merging stops when no pair is left") {
    const auto v = Vocabulary::build({"ab"}, 100);
    CHECK(v.size() == kReservedCount + 3);
  }

  TEST_CASE("mapping is bijective and reserved ids are never merged") {
    const std::vector<std::string> corpus = {"The molecule is an acid.", "CC(=O)O", "c1ccccc1", "the acid"};
    const auto v = Vocabulary::build(corpus, 80);
    for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) {
      if (id < static_cast<TokenId>(kReservedCount)) continue;
      CHECK(v.id_of(v.token(id)) == id);
    }
    for (const auto &[l, r] : v.merges()) {
      CHECK_FALSE(l.empty());
      CHECK_FALSE(r.empty());
    }
  }

  TEST_CASE("save and load preserve ids and fingerprint") {
    const auto v = Vocabulary::build({"line\none", "tab\there", "back\\slash"}, 40);
    const auto path = std::filesystem::temp_directory_path() / "grapht5_vocab_test.txt";
    v.save(path);
    const auto w = Vocabulary::load(path);
    std::filesystem::remove(path);
    REQUIRE(w.size() == v.size());
    for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) CHECK(w.token(id) == v.token(id));
    CHECK(w.fingerprint() == v.fingerprint());
  }

  TEST_CASE("unknown bytes map to unk") {
    const auto v = Vocabulary::build({"abc"}, 10);
    const auto ids = v.segment("abz");
    REQUIRE(ids.size() == 2);  // "ab" is a learned merge
    CHECK(v.token(ids[0]) == "ab");
    CHECK(ids[1] == kUnkId);
  }
}

TEST_SUITE("encode_text") {
  const auto vocab = Vocabulary::build({"CCO", "CC(=O)O", "the acid is here"}, 40);

  TEST_CASE("empty text is all pad") {
    const auto s = encode_text(vocab, "", 6);
    CHECK(s.length() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(s.ids[i] == kPadId);
      CHECK_FALSE(s.mask[i]);
    }
  }

  TEST_CASE("long text truncates to the budget") {
    const auto s = encode_text(vocab, "the acid is here the acid is here", 4);
    CHECK(s.length() == 4);
    CHECK(s.valid_count() == 4);
    const auto eos = encode_text(vocab, "the acid is here the acid is here", 4, true);
    CHECK(eos.ids[3] == kEosId);
    CHECK(eos.valid_count() == 4);
    CHECK(eos.ids[0] == s.ids[0]);
  }

  TEST_CASE("mask is false exactly at pad ids") {
    for (const auto *text : {"CCO", "CC(=O)O", "the", "x"}) {
      const auto s = encode_text(vocab, text, 12, true);
      for (std::size_t i = 0; i < s.length(); ++i) CHECK(s.mask[i] == (s.ids[i] != kPadId));
    }
  }

  TEST_CASE("decode inverts encode on the corpus") {
    for (const auto *text : {"CCO", "CC(=O)O", "the acid is here"}) {
      CHECK(vocab.decode(encode_text(vocab, text, 32).ids) == text);
      CHECK(vocab.decode(encode_text(vocab, text, 32, true).ids) == text);
    }
  }
}

TEST_SUITE("text_model") {
  TEST_CASE("encoder output has the padded shape") {
    ParameterStore<double> store(1);
    TextModel<double> model(store, "text", tiny_config(20));
    TokenSequence seq;
    seq.ids = {5, 6, 7, 0, 0, 0, 0, 0, 0, 0};
    seq.mask = {true, true, true, false, false, false, false, false, false, false};
    const auto out = encoder_forward(model, seq);
    CHECK(out.shape() == numerics::Shape{10, 8});
    seq.ids.push_back(0);
    seq.mask.push_back(false);
    CHECK_THROWS_AS(encoder_forward(model, seq), DimensionError);
  }

  TEST_CASE("perturbing padded encoder inputs leaves real rows untouched") {
    ParameterStore<double> store(2);
    TextModel<double> model(store, "text", tiny_config(20));
    std::mt19937_64 rng(5);
    const std::vector<TokenId> ids{4, 9, 11, 0, 0, 0};
    const Mask mask{true, true, true, false, false, false};
    const auto embedded = model.embed_source(ids);
    const auto base = model.encode_embeddings(embedded, mask);
    for (int trial = 0; trial < 10; ++trial) {
      auto perturbed = embedded.clone();
      auto v = perturbed.mutable_values();
      for (std::size_t r = 3; r < 6; ++r)
        for (std::size_t c = 0; c < 8; ++c) v[r * 8 + c] += std::uniform_real_distribution<double>(-50, 50)(rng);
      const auto out = model.encode_embeddings(perturbed, mask);
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 8; ++c) CHECK(out(r, c) == base(r, c));
    }
  }

  TEST_CASE("encode skips padding without changing real rows") {
    ParameterStore<double> store(4);
    TextModel<double> model(store, "text", tiny_config(20));
    TokenSequence seq;
    seq.ids = {7, 3, 12, 5, 0, 0, 0, 0};
    seq.mask = {true, true, true, true, false, false, false, false};
    const auto full = model.encode_embeddings(model.embed_source(seq.ids), seq.mask);
    const auto out = model.encode(seq);
    REQUIRE(out.shape() == full.shape());
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(out(r, c) == (r < 4 ? full(r, c) : 0.0));
    seq.ids.assign(8, 0);
    seq.mask.assign(8, false);
    const auto empty = model.encode(seq);
    CHECK(std::all_of(empty.values().begin(), empty.values().end(), [](double v) { return v == 0.0; }));
  }

  TEST_CASE("decoder is causal and ignores masked context rows") {
    ParameterStore<double> store(3);
    TextModel<double> model(store, "text", tiny_config(20));
    std::mt19937_64 rng(6);
    auto ctx = random_context(9, 8, rng, 3);
    const std::vector<TokenId> ids{0, 5, 6, 7, 8, 9};
    const auto base = model.decode(ctx, ids);
    CHECK(base.shape() == numerics::Shape{6, 20});
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
      auto changed = ids;
      for (std::size_t k = t + 1; k < ids.size(); ++k) changed[k] = static_cast<TokenId>(3 + rng() % 17);
      const auto out = model.decode(ctx, changed);
      for (std::size_t r = 0; r <= t; ++r)
        for (std::size_t c = 0; c < 20; ++c) CHECK(out(r, c) == base(r, c));
    }
    auto perturbed = ctx;
    perturbed.values = ctx.values.clone();
    auto v = perturbed.values.mutable_values();
    for (std::size_t r = 6; r < 9; ++r)
      for (std::size_t c = 0; c < 8; ++c) v[r * 8 + c] = 1e3 * static_cast<double>(r + c);
    const auto masked = model.decode(perturbed, ids);
    CHECK(testing::bit_equal(masked.values(), base.values()));
  }

  TEST_CASE("context longer than the configured limit is rejected") {
    ParameterStore<double> store(3);
    TextModel<double> model(store, "text", tiny_config(20));
    std::mt19937_64 rng(6);
    const std::vector<TokenId> ids{0, 5};
    CHECK_THROWS_AS(model.decode(random_context(17, 8, rng), ids), DimensionError);
    CHECK_THROWS_AS(model.decode(random_context(4, 7, rng), ids), DimensionError);
  }

  TEST_CASE("shift_right prepends pad and drops the last token") {
    const std::vector<TokenId> t{7, 8, 1, 0};
    CHECK(shift_right(t) == std::vector<TokenId>{0, 7, 8, 1});
  }

  TEST_CASE("full model gradients pass the finite-difference check") {
    ParameterStore<double> store(4);
    TextModel<double> model(store, "text", tiny_config(12));
    std::mt19937_64 rng(8);
    auto ctx = random_context(5, 8, rng, 1);
    TokenSequence src;
    src.ids = {3, 4, 5, 6, 0, 0, 0, 0, 0, 0};
    src.mask = {true, true, true, true, false, false, false, false, false, false};
    TokenSequence target;
    target.ids = {7, 8, 9, 1, 0, 0, 0, 0};
    target.mask = {true, true, true, true, false, false, false, false};
    const auto report = numerics::grad_check<double>(
        [&] {
          auto fused = ctx;
          fused.values = numerics::concat_rows<double>({encoder_forward(model, src), ctx.values});
          fused.mask.insert(fused.mask.begin(), src.mask.begin(), src.mask.end());
          const auto logits = decoder_forward(model, fused, target);
          return numerics::cross_entropy(logits, std::span<const TokenId>(target.ids), kPadId);
        },
        store.parameters());
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-4);
  }
}

TEST_SUITE("generation") {
  TEST_CASE("eos ranked first gives an empty caption") {
    const auto vocab = Vocabulary::build({"abc"}, 10);
    const NextTokenScores eos_first = [&](std::span<const TokenId>) {
      std::vector<double> s(vocab.size(), 0.0);
      s[kEosId] = 5.0;
      return s;
    };
    CHECK(vocab.decode(greedy_decode(eos_first, 10)).empty());
    CHECK(vocab.decode(beam_decode(eos_first, 3, 10)).empty());
  }

  TEST_CASE("hand-built logit table spells a b") {
    const auto vocab = Vocabulary::build({"a b"}, kReservedCount + 3);
    const std::vector<TokenId> script = {vocab.id_of("a"), vocab.id_of(" "), vocab.id_of("b"), kEosId};
    const NextTokenScores table = [&](std::span<const TokenId> prefix) {
      std::vector<double> s(vocab.size(), -1.0);
      s[static_cast<std::size_t>(script.at(prefix.size()))] = 2.0;
      return s;
    };
    CHECK(vocab.decode(greedy_decode(table, 10)) == "a b");
    CHECK(vocab.decode(beam_decode(table, 4, 10)) == "a b");
  }

  TEST_CASE("greedy stops at max_len and breaks ties toward low ids") {
    const NextTokenScores flat = [](std::span<const TokenId>) { return std::vector<double>(6, 0.0); };
    CHECK(greedy_decode(flat, 3) == std::vector<TokenId>{0, 0, 0});
    CHECK_THROWS_AS(greedy_decode(flat, 0), ConfigError);
  }

  TEST_CASE("width one beam equals greedy on random scorers") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto next = hashed_scores(seed, 3 + seed % 6);
      CHECK(beam_decode(next, 1, 7) == greedy_decode(next, 7));
    }
  }

  TEST_CASE("width one beam equals greedy on random tiny models") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      ParameterStore<double> store(seed);
      TextModel<double> model(store, "text", tiny_config(9));
      std::mt19937_64 rng(seed);
      const auto ctx = random_context(4, 8, rng);
      const auto scorer = model_scorer(model, ctx);
      CHECK(beam_decode(scorer, 1, 8) == greedy_decode(scorer, 8));
    }
  }

  TEST_CASE("an unbounded beam finds the best normalised sequence") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const std::size_t vocab = 4, max_len = 3;
      const auto next = hashed_scores(1000 + seed, vocab);
      std::vector<Scored> all;
      std::vector<TokenId> prefix;
      enumerate_all(next, max_len, prefix, 0.0, all);
      const auto best = std::max_element(all.begin(), all.end(),
                                         [](const Scored &a, const Scored &b) { return a.normalized < b.normalized; });
      CHECK(beam_decode(next, 1000, max_len) == best->ids);
    }
  }

  TEST_CASE("model generation respects the decoder length") {
    ParameterStore<double> store(9);
    TextModel<double> model(store, "text", tiny_config(12));
    const auto vocab = Vocabulary::build({"abcdefghi"}, 12);
    std::mt19937_64 rng(1);
    const auto ctx = random_context(4, 8, rng);
    DecodeOptions opts;
    opts.max_len = 100;
    const auto text = generate(model, vocab, ctx, opts);
    CHECK(vocab.segment(text).size() <= model.config().max_target_len);
    opts.strategy = DecodeStrategy::kBeam;
    opts.beam_width = 3;
    CHECK(vocab.segment(generate(model, vocab, ctx, opts)).size() <= model.config().max_target_len);
  }

  TEST_CASE("log_softmax normalises") {
    const std::vector<double> s{1.0, 2.0, 3.0};
    const auto lp = log_softmax(s);
    double z = 0.0;
    for (const double x : lp) z += std::exp(x);
    CHECK(std::abs(z - 1.0) < 1e-15);
  }
}
