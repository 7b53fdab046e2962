#include "grapht5/harness/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "grapht5/error.hpp"
#include "grapht5/numerics/adamw.hpp"

namespace grapht5::harness {

namespace ops = numerics;

template <typename T>
TrainResult train(GraphT5Model<T> &model, const std::vector<Example> &examples, const TrainOptions &options) {
  if (examples.empty()) throw ContractError("cannot train on an empty dataset");
  const auto &run = model.run_config();
  ops::AdamWOptions adam;
  adam.learning_rate = run.learning_rate;
  adam.weight_decay = run.weight_decay;
  ops::AdamW<T> optimizer(model.store(), adam);

  std::mt19937_64 order_rng(run.seed + 1);
  std::vector<std::size_t> order(examples.size());
  TrainResult result;
  model.set_training(true);
  model.text().reseed(run.seed + 2);

  for (std::size_t epoch = 1; epoch <= run.epochs && !result.stopped_early; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng() % i]);

    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0, batch = 1; start < order.size(); start += run.batch_size, ++batch) {
      const auto end = std::min(order.size(), start + run.batch_size);
      model.store().zero_grad();
      double batch_loss = 0.0;
      try {
        for (std::size_t k = start; k < end; ++k) {
          ops::Tape<T> tape;
          ops::TapeScope<T> scope(tape);
          const auto loss = model.loss(examples[order[k]]);
          batch_loss += static_cast<double>(loss.item());
          tape.backward(loss);
        }
      } catch (const EvaluationError &e) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch) + ": " + e.what());
      }
      const auto n = static_cast<double>(end - start);
      batch_loss /= n;
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch));
      }
      optimizer.step(1.0 / n);
      ++result.steps;
      result.step_losses.push_back(batch_loss);
      epoch_sum += batch_loss;
      ++epoch_batches;
      const bool keep_going = !options.on_step || options.on_step(result.steps, batch_loss);
      if (!keep_going || (run.max_steps != 0 && result.steps >= run.max_steps)) {
        result.stopped_early = true;
        break;
      }
    }
    const double epoch_loss = epoch_sum / static_cast<double>(epoch_batches);
    result.epoch_losses.push_back(epoch_loss);
    if (options.log) {
      *options.log << "epoch " << epoch << "/" << run.epochs << "  loss " << std::fixed << std::setprecision(6)
                   << epoch_loss << "  steps " << result.steps << std::defaultfloat << '\n';
    }
  }
  model.set_training(false);
  return result;
}

template <typename T>
std::vector<std::string> generate_all(GraphT5Model<T> &model, const text_model::Vocabulary &vocab,
                                      const std::vector<Example> &examples) {
  const auto options = model.run_config().decode_options();
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const auto &ex : examples) out.push_back(model.generate(ex, vocab, options));
  return out;
}

EvaluationReport score_predictions(const std::vector<std::string> &predictions,
                                   const std::vector<std::string> &references, bool with_buckets) {
  EvaluationReport report;
  report.overall = metrics::score_corpus(predictions, references);
  report.predictions = predictions;
  report.references = references;
  if (with_buckets) {
    std::vector<std::size_t> lengths;
    lengths.reserve(references.size());
    for (const auto &r : references) lengths.push_back(word_count(r));
    const auto groups = split_lengths(lengths, kDefaultBucketBoundaries);
    for (std::size_t b = 0; b < 3; ++b) {
      report.bucket_sizes[b] = groups[b].size();
      if (groups[b].empty()) continue;
      std::vector<std::string> p, r;
      for (const auto i : groups[b]) {
        p.push_back(predictions[i]);
        r.push_back(references[i]);
      }
      report.buckets[b] = metrics::score_corpus(p, r);
    }
  }
  return report;
}

template <typename T>
EvaluationReport evaluate(GraphT5Model<T> &model, const text_model::Vocabulary &vocab,
                          const std::vector<CaptionRecord> &records, bool with_buckets) {
  if (records.empty()) throw ContractError("cannot evaluate on an empty dataset");
  std::vector<Example> examples;
  std::vector<std::string> references;
  for (const auto &r : records) {
    examples.push_back(model.prepare(r, vocab));
    references.push_back(r.description);
  }
  auto report = score_predictions(generate_all(model, vocab, examples), references, with_buckets);
  report.ablation = model.ablation().label();
  return report;
}

std::vector<AblationRow> ablate(const RunConfig &config, const text_model::Vocabulary &vocab,
                                const std::vector<CaptionRecord> &train_records,
                                const std::vector<CaptionRecord> &eval_records, std::ostream *log) {
  std::vector<AblationRow> rows;
  for (const auto &ablation : AblationConfig::table_rows()) {
    if (log) *log << "== " << ablation.label() << " ==\n";
    GraphT5Model<float> model(config, ablation, vocab.size());
    std::vector<Example> examples;
    for (const auto &r : train_records) examples.push_back(model.prepare(r, vocab));
    TrainOptions options;
    options.log = log;
    const auto trained = train(model, examples, options);
    const auto report = evaluate(model, vocab, eval_records, false);
    rows.push_back(AblationRow{ablation, report.overall, model.counters(), trained.epoch_losses});
  }
  return rows;
}

namespace {

constexpr const char *kMetricNote =
    "Scores use lowercase + punctuation tokenization, epsilon-smoothed corpus BLEU and exact-match METEOR; "
    "they are comparable within this tool only.";

// Published full-scale results on ChEBI-20, shown for orientation only.
struct ReferenceRow {
  const char *label;
  double scores[6];
};
constexpr ReferenceRow kPublishedAblation[] = {
    {"S", {56.6, 48.3, 57.6, 61.7, 46.3, 55.6}},
    {"G", {56.0, 48.2, 56.9, 62.0, 46.6, 56.1}},
    {"G+CTA", {62.2, 54.8, 62.8, 66.5, 52.0, 60.5}},
    {"G+S", {63.3, 56.1, 63.8, 67.5, 53.3, 61.5}},
    {"G+S+CTA", {63.8, 56.6, 64.1, 67.7, 53.7, 61.7}},
};

void metric_header(std::ostream &os) {
  for (const auto *name : {"BLEU-2", "BLEU-4", "METEOR", "ROUGE-1", "ROUGE-2", "ROUGE-L"}) os << std::setw(9) << name;
}

void metric_row(std::ostream &os, const metrics::MetricScores &s) {
  for (const auto &[name, value] : metrics::named_scores(s)) os << std::setw(9) << metrics::format_percent(value);
}

std::string key_of(std::string name) {
  for (auto &c : name) {
    if (c == '-') c = '_';
    else c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return name;
}

void metric_key_values(std::ostream &os, const std::string &prefix, const metrics::MetricScores &s) {
  for (const auto &[name, value] : metrics::named_scores(s)) {
    os << prefix << key_of(name) << '=' << metrics::format_percent(value) << '\n';
  }
  os << prefix << "pairs=" << s.pairs << '\n';
}

const char *mark(bool on) { return on ? "yes" : "no"; }

}  // namespace

std::string format_evaluation(const EvaluationReport &report) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "split" << std::right << std::setw(7) << "pairs";
  metric_header(os);
  os << '\n';
  auto line = [&](const std::string &name, std::size_t n, const metrics::MetricScores &s) {
    os << std::left << std::setw(10) << name << std::right << std::setw(7) << n;
    metric_row(os, s);
    os << '\n';
  };
  line("all", report.overall.pairs, report.overall);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto name = std::string(bucket_name(static_cast<LengthBucket>(b)));
    if (report.buckets[b]) {
      line(name, report.bucket_sizes[b], *report.buckets[b]);
    } else if (report.bucket_sizes[b] == 0 && (report.buckets[0] || report.buckets[1] || report.buckets[2])) {
      os << std::left << std::setw(10) << name << std::right << std::setw(7) << 0 << "  (empty)\n";
    }
  }
  os << "\nReference (published, full scale, ChEBI-20): BLEU-2 63.8  BLEU-4 56.6\n" << kMetricNote << '\n';
  return os.str();
}

std::string format_ablation(const std::vector<AblationRow> &rows) {
  std::ostringstream os;
  os << std::left << std::setw(7) << "Graph" << std::setw(8) << "SMILES" << std::setw(5) << "CTA" << std::right;
  metric_header(os);
  os << '\n';
  for (const auto &row : rows) {
    os << std::left << std::setw(7) << mark(row.ablation.use_graph) << std::setw(8) << mark(row.ablation.use_smiles)
       << std::setw(5) << mark(row.ablation.use_cross_token_attention) << std::right;
    metric_row(os, row.scores);
    os << '\n';
  }
  os << "\nReference rows (published, full scale, ChEBI-20):\n";
  for (const auto &ref : kPublishedAblation) {
    os << std::left << std::setw(20) << ref.label << std::right;
    for (const double v : ref.scores) os << std::setw(9) << std::fixed << std::setprecision(1) << v;
    os << std::defaultfloat << '\n';
  }
  os << kMetricNote << '\n';
  return os.str();
}

std::string evaluation_key_values(const EvaluationReport &report) {
  std::ostringstream os;
  if (!report.ablation.empty()) os << "ablation=" << report.ablation << '\n';
  metric_key_values(os, "all.", report.overall);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto name = std::string(bucket_name(static_cast<LengthBucket>(b)));
    if (report.buckets[b]) metric_key_values(os, name + ".", *report.buckets[b]);
  }
  return os.str();
}

std::string ablation_key_values(const std::vector<AblationRow> &rows) {
  std::ostringstream os;
  for (const auto &row : rows) {
    const auto p = row.ablation.label() + ".";
    os << p << "graph=" << (row.ablation.use_graph ? "true" : "false") << '\n'
       << p << "smiles=" << (row.ablation.use_smiles ? "true" : "false") << '\n'
       << p << "cta=" << (row.ablation.use_cross_token_attention ? "true" : "false") << '\n';
    metric_key_values(os, p, row.scores);
    os << p << "calls.chem=" << row.counters.chem_parses << '\n'
       << p << "calls.graph_encoder=" << row.counters.graph_encoder_calls << '\n'
       << p << "calls.smiles_encoder=" << row.counters.smiles_encoder_calls << '\n'
       << p << "calls.cross_token_attention=" << row.counters.cross_token_attention_calls << '\n'
       << p << "calls.decoder=" << row.counters.decoder_calls << '\n';
  }
  return os.str();
}

template TrainResult train(GraphT5Model<float> &, const std::vector<Example> &, const TrainOptions &);
template TrainResult train(GraphT5Model<double> &, const std::vector<Example> &, const TrainOptions &);
template std::vector<std::string> generate_all(GraphT5Model<float> &, const text_model::Vocabulary &,
                                               const std::vector<Example> &);
template std::vector<std::string> generate_all(GraphT5Model<double> &, const text_model::Vocabulary &,
                                               const std::vector<Example> &);
template EvaluationReport evaluate(GraphT5Model<float> &, const text_model::Vocabulary &,
                                   const std::vector<CaptionRecord> &, bool);
template EvaluationReport evaluate(GraphT5Model<double> &, const text_model::Vocabulary &,
                                   const std::vector<CaptionRecord> &, bool);

}  // namespace grapht5::harness
