#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "grapht5/text_model/generate.hpp"

namespace grapht5::harness {

enum class Task { kCaption, kIupac };

Task parse_task(std::string_view name);  // ConfigError for anything but caption/iupac
std::string_view task_name(Task task);

// Which inputs reach the decoder. Cross-token attention needs the graph
// (it writes into the graph rows) and always reads SMILES keys, even when the
// SMILES segment itself is left out of the decoder context.
struct AblationConfig {
  bool use_graph = true;
  bool use_smiles = true;
  bool use_cross_token_attention = true;

  void validate() const;
  std::string label() const;  // "S", "G", "G+CTA", "G+S", "G+S+CTA"
  bool encodes_smiles() const { return use_smiles || use_cross_token_attention; }

  // The five rows of the modality ablation, in table order.
  static std::vector<AblationConfig> table_rows();
  static AblationConfig parse(std::string_view label);
};

struct RunConfig {
  Task task = Task::kCaption;
  std::size_t epochs = 10;
  double learning_rate = 1e-4;
  std::size_t batch_size = 14;
  double dropout = 0.1;
  double weight_decay = 0.01;
  std::size_t layers = 2;  // encoder and decoder each
  std::size_t heads = 4;
  std::uint64_t seed = 42;

  std::size_t smiles_len = 128;  // |n|
  std::size_t target_len = 128;  // |m|
  std::size_t prompt_len = 16;   // |P|
  std::size_t graph_len = 64;    // l
  std::size_t width = 256;       // d
  std::size_t graph_hidden = 128;  // d_g
  std::size_t ff_width = 1024;
  std::size_t vocab_size = 2048;  // V, an upper bound when the corpus runs out of merges

  std::size_t cta_heads = 1;
  bool cta_post_self_attention = false;

  // 0 means no cap; otherwise training stops after this many optimizer steps.
  std::size_t max_steps = 0;

  text_model::DecodeStrategy decode = text_model::DecodeStrategy::kGreedy;
  std::size_t beam_width = 4;

  void validate() const;

  static RunConfig desk();
  // Full-size hyperparameters: 120 epochs, batch 14, 12 layers, 12 heads, d = 768.
  static RunConfig paper_scale();
  // A few thousand parameters; for smoke tests.
  static RunConfig tiny();

  text_model::DecodeOptions decode_options() const;
};

// Flat key=value view shared by the CLI config file and checkpoint headers.
std::map<std::string, std::string> to_key_values(const RunConfig &config);
void apply_key_value(RunConfig &config, const std::string &key, const std::string &value);
RunConfig from_key_values(const std::map<std::string, std::string> &values);

}  // namespace grapht5::harness
