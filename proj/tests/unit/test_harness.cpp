#include "doctest.h"

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "grapht5/error.hpp"
#include "grapht5/harness/trainer.hpp"
#include "grapht5/numerics/grad_check.hpp"
#include "test_support.hpp"

using namespace grapht5;
using namespace grapht5::harness;

namespace {

DatasetLoad read(const std::string &text) {
  std::istringstream in(text);
  return read_dataset(in, Task::kCaption, "mem");
}

std::string format_error_of(const std::string &text) {
  try {
    (void)read(text);
  } catch (const FormatError &e) {
    return e.what();
  }
  return "";
}

RunConfig small_run() {
  auto run = RunConfig::tiny();
  run.epochs = 1;
  run.batch_size = 2;
  run.seed = 5;
  return run;
}

const std::string kHeader = "cid\tsmiles\tdescription\n";

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("three valid rows") {
    const auto load = read(kHeader + "1\tCCO\tThe molecule is ethanol.\n2\tc1ccccc1\tBenzene.\n3\tC(=O)O\tAn acid.\n");
    CHECK(load.records.size() == 3);
    CHECK(load.rows == 3);
    CHECK(load.skipped == 0);
    CHECK(load.records[1].smiles == "c1ccccc1");
    CHECK(load.records[2].description == "An acid.");
  }

  TEST_CASE("unparseable SMILES is skipped and counted") {
    std::ostringstream warn;
    std::istringstream in(kHeader + "1\tCCO\tEthanol.\n2\tC1CC\tBroken ring.\n3\tCC\tEthane.\n");
    const auto load = read_dataset(in, Task::kCaption, "mem", &warn);
    CHECK(load.records.size() == 2);
    CHECK(load.skipped == 1);
    CHECK(load.records.size() + load.skipped == load.rows);
    REQUIRE(load.warnings.size() == 1);
    CHECK(warn.str().find("mem:3") != std::string::npos);
  }

  TEST_CASE("header only is an empty dataset") {
    const auto load = read(kHeader);
    CHECK(load.records.empty());
    CHECK(load.rows == 0);
  }

  TEST_CASE("structural problems name the line") {
    CHECK(format_error_of("1\tCCO\tEthanol.\n").find("mem:1") != std::string::npos);
    CHECK(format_error_of("").find("mem:1") != std::string::npos);
    CHECK(format_error_of(kHeader + "1\tCCO\tok\n2\tCC\n").find("mem:3") != std::string::npos);
    CHECK(format_error_of(kHeader + "1\tCCO\t\n").find("mem:2") != std::string::npos);
  }

  TEST_CASE("missing file is an io error") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/grapht5.tsv", Task::kCaption), IoError);
  }

  TEST_CASE("write then load round-trips") {
    const auto records = synthetic_corpus(12, 3);
    const auto path = std::filesystem::temp_directory_path() / "grapht5_dataset_test.tsv";
    write_dataset(path, records);
    const auto load = load_dataset(path, Task::kCaption);
    std::filesystem::remove(path);
    REQUIRE(load.records.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(load.records[i].id == records[i].id);
      CHECK(load.records[i].smiles == records[i].smiles);
      CHECK(load.records[i].description == records[i].description);
    }
  }

  TEST_CASE("synthetic corpus is deterministic and parseable") {
    const auto a = synthetic_corpus(40, 11), b = synthetic_corpus(40, 11), c = synthetic_corpus(40, 12);
    bool differs = false;
    std::set<std::string> smiles;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].smiles == b[i].smiles);
      CHECK(a[i].description == b[i].description);
      differs = differs || a[i].smiles != c[i].smiles;
      CHECK_NOTHROW(chem::smiles_to_graph(a[i].smiles));
      smiles.insert(a[i].smiles);
    }
    CHECK(differs);
    CHECK(smiles.size() == a.size());
    CHECK_THROWS_AS(synthetic_corpus(100000, 1), ConfigError);
  }
}

TEST_SUITE("prompts") {
  TEST_CASE("templates") {
    CHECK(build_prompt(Task::kCaption) == "Caption the following molecule:");
    CHECK(build_prompt(Task::kIupac) == "Predict IUPAC name of the following molecule:");
    CHECK(build_prompt("iupac") == "Predict IUPAC name of the following molecule:");
    CHECK_THROWS_AS(build_prompt("retro"), ConfigError);
    CHECK_THROWS_AS(parse_task("retro"), ConfigError);
    CHECK(task_name(parse_task("caption")) == "caption");
  }
}

TEST_SUITE("buckets") {
  TEST_CASE("boundaries are inclusive on the left bucket") {
    CHECK(bucket_of(34, kDefaultBucketBoundaries) == LengthBucket::kShort);
    CHECK(bucket_of(35, kDefaultBucketBoundaries) == LengthBucket::kMedium);
    CHECK(bucket_of(48, kDefaultBucketBoundaries) == LengthBucket::kMedium);
    CHECK(bucket_of(49, kDefaultBucketBoundaries) == LengthBucket::kLong);
  }

  TEST_CASE("one record per bucket") {
    const auto groups = split_lengths({10, 40, 60}, kDefaultBucketBoundaries);
    for (std::size_t b = 0; b < 3; ++b) {
      REQUIRE(groups[b].size() == 1);
      CHECK(groups[b][0] == b);
    }
  }

  TEST_CASE("records split by word count") {
    std::vector<CaptionRecord> records(4);
    records[0].description = std::string(34 * 2, ' ');
    for (std::size_t i = 0; i < 34; ++i) records[0].description[2 * i] = 'w';
    records[1].description = "a b c";
    records[2].description = records[0].description + " x y z w v u t s r q p o n m l";  // 49 words
    records[3].description = records[0].description + " x";                              // 35 words
    const auto buckets = split_by_length(records);
    CHECK(buckets[0].size() == 2);
    CHECK(buckets[1].size() == 1);
    CHECK(buckets[2].size() == 1);
    CHECK(word_count("  two   words ") == 2);
  }

  TEST_CASE("buckets partition the input") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::size_t> lengths(rng() % 60);
      for (auto &l : lengths) l = rng() % 90;
      const auto groups = split_lengths(lengths, kDefaultBucketBoundaries);
      std::vector<std::size_t> all;
      for (const auto &g : groups) all.insert(all.end(), g.begin(), g.end());
      std::sort(all.begin(), all.end());
      CHECK(all.size() == lengths.size());
      for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    }
  }

  TEST_CASE("quantile boundaries give near-equal groups") {
    std::mt19937_64 rng(4);
    for (std::size_t n = 3; n < 120; ++n) {
      std::vector<std::size_t> lengths(n);
      for (std::size_t i = 0; i < n; ++i) lengths[i] = 20 + 3 * i;
      std::shuffle(lengths.begin(), lengths.end(), rng);
      const auto groups = split_lengths(lengths, quantile_boundaries(lengths));
      const auto [lo, hi] = std::minmax({groups[0].size(), groups[1].size(), groups[2].size()});
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_SUITE("config") {
  TEST_CASE("ablation rows and labels") {
    const auto rows = AblationConfig::table_rows();
    REQUIRE(rows.size() == 5);
    const char *labels[] = {"S", "G", "G+CTA", "G+S", "G+S+CTA"};
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(rows[i].label() == labels[i]);
      CHECK(AblationConfig::parse(labels[i]).label() == labels[i]);
      CHECK_NOTHROW(rows[i].validate());
    }
    CHECK_THROWS_AS((AblationConfig{false, false, false}.validate()), ConfigError);
    CHECK_THROWS_AS((AblationConfig{false, true, true}.validate()), ConfigError);
    CHECK_THROWS_AS(AblationConfig::parse("S+CTA"), ConfigError);
  }

  TEST_CASE("key-value round trip and validation") {
    auto run = RunConfig::tiny();
    run.learning_rate = 0.00123;
    run.decode = text_model::DecodeStrategy::kBeam;
    const auto back = from_key_values(to_key_values(run));
    CHECK(to_key_values(back) == to_key_values(run));
    CHECK(back.learning_rate == run.learning_rate);
    RunConfig bad;
    CHECK_THROWS_AS(apply_key_value(bad, "no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_key_value(bad, "epochs", "many"), ConfigError);
    auto kv = to_key_values(run);
    kv["epochs"] = "0";
    CHECK_THROWS_AS(from_key_values(kv), ConfigError);
  }

  TEST_CASE("paper-scale preset") {
    const auto p = RunConfig::paper_scale();
    CHECK(p.epochs == 120);
    CHECK(p.learning_rate == 1e-4);
    CHECK(p.batch_size == 14);
    CHECK(p.dropout == 0.1);
    CHECK(p.layers == 12);
    CHECK(p.heads == 12);
    CHECK_NOTHROW(p.validate());
    CHECK_NOTHROW(RunConfig::desk().validate());
  }
}

TEST_SUITE("model") {
  const auto records = synthetic_corpus(6, 21);
  const auto run = small_run();
  const auto vocab = build_vocabulary(records, run.vocab_size);

  TEST_CASE("examples carry padded inputs and an eos-terminated target") {
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
    const auto ex = model.prepare(records[0], vocab);
    CHECK(ex.prompt.length() == run.prompt_len);
    CHECK(ex.smiles.length() == run.smiles_len);
    CHECK(ex.target.length() == run.target_len);
    CHECK(ex.graph.has_value());
    CHECK(std::find(ex.target.ids.begin(), ex.target.ids.end(), text_model::kEosId) != ex.target.ids.end());
    CHECK(model.counters().chem_parses == 1);
  }

  TEST_CASE("context layout per ablation row") {
    for (const auto &ab : AblationConfig::table_rows()) {
      CAPTURE(ab.label());
      GraphT5Model<double> model(run, ab, vocab.size());
      const auto ex = model.prepare(records[1], vocab);
      const auto ctx = model.context(ex);
      const auto expected = run.prompt_len + (ab.use_graph ? 1 + run.graph_len : 0) + (ab.use_smiles ? run.smiles_len : 0);
      CHECK(ctx.length() == expected);
      CHECK(ctx.layout.prompt_length == run.prompt_len);
      CHECK(ctx.layout.graph_length == (ab.use_graph ? run.graph_len : 0));
      CHECK(ctx.layout.smiles_length == (ab.use_smiles ? run.smiles_len : 0));
      const auto &c = model.counters();
      CHECK(c.chem_parses == (ab.use_graph ? 1u : 0u));
      CHECK(c.graph_encoder_calls == (ab.use_graph ? 1u : 0u));
      CHECK(c.cross_token_attention_calls == (ab.use_cross_token_attention ? 1u : 0u));
      CHECK(c.smiles_encoder_calls == (ab.encodes_smiles() ? 1u : 0u));
      CHECK(c.prompt_encoder_calls == 1);
      CHECK((model.graph_encoder() != nullptr) == ab.use_graph);
      CHECK((model.cross_token_attention() != nullptr) == ab.use_cross_token_attention);
    }
  }

  TEST_CASE("loss over the real target prefix equals the full-length loss") {
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
    model.set_training(false);
    auto record = records[2];
    record.description = "An acid.";
    const auto ex = model.prepare(record, vocab);
    REQUIRE(ex.target.valid_count() < ex.target.length());
    const auto ctx = model.context(ex);
    const auto logits = model.text().decode(ctx, text_model::shift_right(ex.target.ids));
    const auto full = numerics::cross_entropy(logits, std::span<const text_model::TokenId>(ex.target.ids), text_model::kPadId);
    CHECK(model.loss(ex).item() == full.item());
  }

  TEST_CASE("a SMILES-only model never needs a parseable molecule") {
    GraphT5Model<double> model(run, AblationConfig::parse("S"), vocab.size());
    CaptionRecord odd{"x", "C1CC", "A broken ring.", Task::kCaption};
    const auto ex = model.prepare(odd, vocab);
    CHECK_FALSE(ex.graph.has_value());
    CHECK(model.loss(ex).item() > 0.0);
  }

  TEST_CASE("vocabulary size mismatch is a version error") {
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size() + 1);
    CHECK_THROWS_AS(model.prepare(records[0], vocab), VersionError);
  }

  TEST_CASE("full model gradients pass the finite-difference check") {
    auto grad_run = small_run();
    grad_run.dropout = 0.0;
    GraphT5Model<double> model(grad_run, AblationConfig{}, vocab.size());
    const auto ex = model.prepare(records[2], vocab);
    const auto report =
        numerics::grad_check<double>([&] { return model.loss(ex); }, model.store().parameters());
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-4);
  }

  TEST_CASE("save and load reproduce the model exactly") {
    GraphT5Model<float> model(run, AblationConfig::parse("G+CTA"), vocab.size());
    const auto dir = std::filesystem::temp_directory_path() / "grapht5_model_test";
    std::filesystem::create_directories(dir);
    save_model(dir / "m.ckpt", model, vocab);
    const auto loaded = load_model<float>(dir / "m.ckpt", vocab);
    CHECK(loaded->ablation().label() == "G+CTA");
    CHECK(to_key_values(loaded->run_config()) == to_key_values(model.run_config()));
    const auto &a = model.store().parameters();
    const auto &b = loaded->store().parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto x = a[i].tensor.values(), y = b[i].tensor.values();
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
    const auto other = build_vocabulary(synthetic_corpus(6, 99), run.vocab_size);
    CHECK_THROWS_AS(load_model<float>(dir / "m.ckpt", other), VersionError);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("training") {
  const auto records = synthetic_corpus(6, 21);
  const auto vocab = build_vocabulary(records, small_run().vocab_size);

  std::vector<Example> prepare_all(GraphT5Model<double> & model) {
    std::vector<Example> out;
    for (const auto &r : records) out.push_back(model.prepare(r, vocab));
    return out;
  }

  TEST_CASE("zero learning rate keeps the loss constant") {
    auto run = small_run();
    run.learning_rate = 0.0;
    run.weight_decay = 0.0;
    run.dropout = 0.0;
    run.batch_size = 6;
    run.epochs = 4;
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
    const auto result = train(model, prepare_all(model));
    REQUIRE(result.step_losses.size() == 4);
    for (const double l : result.step_losses) CHECK(std::abs(l - result.step_losses[0]) <= 1e-12);
  }

  TEST_CASE("same seed gives identical loss histories") {
    auto run = small_run();
    run.epochs = 2;
    std::vector<std::vector<double>> histories;
    for (int rep = 0; rep < 2; ++rep) {
      GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
      histories.push_back(train(model, prepare_all(model)).step_losses);
    }
    CHECK(histories[0] == histories[1]);
    CHECK(histories[0].size() == 6);
  }

  TEST_CASE("on_step can stop training and max_steps caps it") {
    auto run = small_run();
    run.epochs = 5;
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
    TrainOptions opts;
    opts.on_step = [](std::size_t step, double) { return step < 2; };
    const auto stopped = train(model, prepare_all(model), opts);
    CHECK(stopped.steps == 2);
    CHECK(stopped.stopped_early);
    run.max_steps = 4;
    GraphT5Model<double> capped(run, AblationConfig{}, vocab.size());
    CHECK(train(capped, prepare_all(capped)).steps == 4);
  }

  TEST_CASE("divergence names the batch") {
    auto run = small_run();
    run.learning_rate = 1e30;
    run.epochs = 50;
    GraphT5Model<double> model(run, AblationConfig{}, vocab.size());
    try {
      (void)train(model, prepare_all(model));
      FAIL("expected DivergenceError");
    } catch (const DivergenceError &e) {
      CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }
  }

  TEST_CASE("evaluation with references as predictions scores 100") {
    std::vector<std::string> refs;
    for (const auto &r : records) refs.push_back(r.description);
    const auto report = score_predictions(refs, refs, true);
    CHECK(metrics::format_percent(report.overall.bleu2) == "100.0");
    CHECK(metrics::format_percent(report.overall.rouge_l) == "100.0");
    CHECK(report.bucket_sizes[0] == records.size());
    const auto text = format_evaluation(report);
    CHECK(text.find("63.8") != std::string::npos);
    const auto kv = evaluation_key_values(report);
    CHECK(kv.find("all.bleu_2=100.0") != std::string::npos);
  }
}

TEST_SUITE("overfit") {
  TEST_CASE("a single pair is memorised and the loss settles") {
    const auto records = synthetic_corpus(1, 2);
    auto run = RunConfig::desk();
    run.dropout = 0.0;
    run.learning_rate = 1e-3;
    run.batch_size = 1;
    run.epochs = 2000;
    const auto vocab = build_vocabulary(records, run.vocab_size);
    GraphT5Model<float> model(run, AblationConfig{}, vocab.size());
    const std::vector<Example> examples{model.prepare(records[0], vocab)};
    const auto result = train(model, examples);
    REQUIRE(result.step_losses.size() == 2000);
    CHECK(result.step_losses.back() < 0.1);
    std::size_t rises = 0;
    for (std::size_t i = 1900; i < 2000; ++i)
      if (result.step_losses[i] > result.step_losses[i - 1]) ++rises;
    CHECK(rises == 0);
    CHECK(model.generate(examples[0], vocab, run.decode_options()) == records[0].description);
  }
}
