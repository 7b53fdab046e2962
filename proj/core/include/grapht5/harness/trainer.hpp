#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "grapht5/harness/model.hpp"
#include "grapht5/metrics/metrics.hpp"

namespace grapht5::harness {

struct TrainOptions {
  // Called after every optimizer step with the 1-based step index and the
  // batch's mean loss; returning false stops training.
  std::function<bool(std::size_t step, double loss)> on_step;
  std::ostream *log = nullptr;  // one line per epoch when set
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  std::size_t steps = 0;
  bool stopped_early = false;
};

// Mini-batch teacher forcing with AdamW. Each epoch visits the examples in a
// seeded shuffled order; gradients are summed over the batch and scaled by
// 1/batch before the update. A non-finite loss raises DivergenceError naming
// the epoch and batch.
template <typename T>
TrainResult train(GraphT5Model<T> &model, const std::vector<Example> &examples, const TrainOptions &options = {});

struct EvaluationReport {
  std::string ablation;
  metrics::MetricScores overall;
  std::array<std::optional<metrics::MetricScores>, 3> buckets;  // short, medium, long
  std::array<std::size_t, 3> bucket_sizes{};
  std::vector<std::string> predictions;
  std::vector<std::string> references;
};

template <typename T>
std::vector<std::string> generate_all(GraphT5Model<T> &model, const text_model::Vocabulary &vocab,
                                      const std::vector<Example> &examples);

EvaluationReport score_predictions(const std::vector<std::string> &predictions,
                                   const std::vector<std::string> &references, bool with_buckets);

template <typename T>
EvaluationReport evaluate(GraphT5Model<T> &model, const text_model::Vocabulary &vocab,
                          const std::vector<CaptionRecord> &records, bool with_buckets);

struct AblationRow {
  AblationConfig ablation;
  metrics::MetricScores scores;
  CallCounters counters;
  std::vector<double> epoch_losses;
};

// Trains and evaluates the five modality configurations with identical seed
// and budgets; counters cover both training and evaluation.
std::vector<AblationRow> ablate(const RunConfig &config, const text_model::Vocabulary &vocab,
                                const std::vector<CaptionRecord> &train_records,
                                const std::vector<CaptionRecord> &eval_records, std::ostream *log = nullptr);

// Human-readable tables with the reference footer.
std::string format_evaluation(const EvaluationReport &report);
std::string format_ablation(const std::vector<AblationRow> &rows);
// Machine-readable key=value lines.
std::string evaluation_key_values(const EvaluationReport &report);
std::string ablation_key_values(const std::vector<AblationRow> &rows);

extern template TrainResult train(GraphT5Model<float> &, const std::vector<Example> &, const TrainOptions &);
extern template TrainResult train(GraphT5Model<double> &, const std::vector<Example> &, const TrainOptions &);

}  // namespace grapht5::harness
