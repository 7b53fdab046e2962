#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "grapht5/chem/smiles.hpp"
#include "grapht5/fusion/cross_token_attention.hpp"
#include "grapht5/graph_encoder/gin.hpp"
#include "grapht5/harness/config.hpp"
#include "grapht5/harness/dataset.hpp"
#include "grapht5/numerics/checkpoint.hpp"
#include "grapht5/text_model/generate.hpp"

namespace grapht5::harness {

// Forward-call instrumentation used to prove that ablated modules stay idle.
struct CallCounters {
  std::size_t chem_parses = 0;
  std::size_t graph_encoder_calls = 0;
  std::size_t smiles_encoder_calls = 0;
  std::size_t prompt_encoder_calls = 0;
  std::size_t cross_token_attention_calls = 0;
  std::size_t decoder_calls = 0;
};

// One record turned into fixed-size model inputs.
struct Example {
  std::string id;
  std::string reference;
  text_model::TokenSequence prompt;
  text_model::TokenSequence smiles;
  text_model::TokenSequence target;  // ends with </s> when it fits
  std::optional<chem::MolGraph> graph;
};

text_model::Vocabulary build_vocabulary(const std::vector<CaptionRecord> &records, std::size_t target_size);

template <typename T>
class GraphT5Model {
 public:
  GraphT5Model(const RunConfig &run, const AblationConfig &ablation, std::size_t vocab_size);

  // Parses the SMILES only when the graph branch is enabled.
  Example prepare(const CaptionRecord &record, const text_model::Vocabulary &vocab);

  // [P, O_Gpool, O_G, S*] with absent segments dropped per the ablation.
  fusion::FusedDecoderInput<T> context(const Example &example);

  // Mean teacher-forced cross-entropy over the non-pad target positions.
  numerics::Tensor<T> loss(const Example &example);

  std::string generate(const Example &example, const text_model::Vocabulary &vocab,
                       const text_model::DecodeOptions &options);

  numerics::ParameterStore<T> &store() { return *store_; }
  const numerics::ParameterStore<T> &store() const { return *store_; }
  const text_model::TextModel<T> &text() const { return text_; }
  text_model::TextModel<T> &text() { return text_; }
  const graph_encoder::GraphEncoder<T> *graph_encoder() const { return graph_ ? &*graph_ : nullptr; }
  const fusion::CrossTokenAttention<T> *cross_token_attention() const { return cta_ ? &*cta_ : nullptr; }

  const RunConfig &run_config() const { return run_; }
  const AblationConfig &ablation() const { return ablation_; }
  const CallCounters &counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }
  void set_training(bool training) { text_.set_training(training); }

 private:
  RunConfig run_;
  AblationConfig ablation_;
  std::unique_ptr<numerics::ParameterStore<T>> store_;
  text_model::TextModel<T> text_;
  std::optional<graph_encoder::GraphEncoder<T>> graph_;
  std::optional<fusion::CrossTokenAttention<T>> cta_;
  CallCounters counters_;
};

text_model::TextModelConfig text_config(const RunConfig &run, std::size_t vocab_size);
graph_encoder::GraphEncoderConfig graph_config(const RunConfig &run);
fusion::CrossTokenAttentionConfig fusion_config(const RunConfig &run);

// Checkpoint header: run configuration, ablation flags and the vocabulary
// fingerprint. Loading with a different vocabulary is a VersionError.
template <typename T>
void save_model(const std::filesystem::path &path, const GraphT5Model<T> &model,
                const text_model::Vocabulary &vocab);

template <typename T>
std::unique_ptr<GraphT5Model<T>> load_model(const std::filesystem::path &path, const text_model::Vocabulary &vocab);

extern template class GraphT5Model<float>;
extern template class GraphT5Model<double>;

}  // namespace grapht5::harness
