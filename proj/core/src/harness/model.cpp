#include "grapht5/harness/model.hpp"

#include <algorithm>
#include <sstream>

#include "grapht5/error.hpp"

namespace grapht5::harness {

namespace ops = numerics;
using text_model::TokenSequence;
using text_model::Vocabulary;

text_model::Vocabulary build_vocabulary(const std::vector<CaptionRecord> &records, std::size_t target_size) {
  std::vector<std::string> corpus;
  corpus.reserve(2 * records.size() + 2);
  corpus.push_back(build_prompt(Task::kCaption));
  corpus.push_back(build_prompt(Task::kIupac));
  for (const auto &r : records) {
    corpus.push_back(r.smiles);
    corpus.push_back(r.description);
  }
  return Vocabulary::build(corpus, target_size);
}

text_model::TextModelConfig text_config(const RunConfig &run, std::size_t vocab_size) {
  text_model::TextModelConfig c;
  c.vocab_size = vocab_size;
  c.width = run.width;
  c.heads = run.heads;
  c.encoder_layers = run.layers;
  c.decoder_layers = run.layers;
  c.ff_width = run.ff_width;
  c.max_source_len = std::max(run.smiles_len, run.prompt_len);
  c.max_target_len = run.target_len;
  c.max_context_len = run.prompt_len + 1 + run.graph_len + run.smiles_len;
  c.dropout = run.dropout;
  return c;
}

graph_encoder::GraphEncoderConfig graph_config(const RunConfig &run) {
  graph_encoder::GraphEncoderConfig c;
  c.hidden = run.graph_hidden;
  c.max_nodes = run.graph_len;
  c.output_width = run.width;
  return c;
}

fusion::CrossTokenAttentionConfig fusion_config(const RunConfig &run) {
  fusion::CrossTokenAttentionConfig c;
  c.width = run.width;
  c.key_width = run.width;
  c.mlp_hidden = run.width;
  c.heads = run.cta_heads;
  c.post_self_attention = run.cta_post_self_attention;
  return c;
}

template <typename T>
GraphT5Model<T>::GraphT5Model(const RunConfig &run, const AblationConfig &ablation, std::size_t vocab_size)
    : run_(run), ablation_(ablation), store_(std::make_unique<ops::ParameterStore<T>>(run.seed)) {
  run_.validate();
  ablation_.validate();
  text_ = text_model::TextModel<T>(*store_, "text", text_config(run_, vocab_size), run_.seed ^ 0x9e3779b97f4a7c15ULL);
  if (ablation_.use_graph) graph_.emplace(*store_, "graph_encoder", graph_config(run_));
  if (ablation_.use_cross_token_attention) cta_.emplace(*store_, "fusion", fusion_config(run_));
}

template <typename T>
Example GraphT5Model<T>::prepare(const CaptionRecord &record, const Vocabulary &vocab) {
  if (vocab.size() != text_.config().vocab_size) {
    throw VersionError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                       std::to_string(text_.config().vocab_size));
  }
  Example ex;
  ex.id = record.id;
  ex.reference = record.description;
  ex.prompt = text_model::encode_text(vocab, build_prompt(record.task), run_.prompt_len);
  ex.smiles = text_model::encode_text(vocab, record.smiles, run_.smiles_len);
  ex.target = text_model::encode_text(vocab, record.description, run_.target_len, true);
  if (ablation_.use_graph) {
    ++counters_.chem_parses;
    ex.graph = chem::smiles_to_graph(record.smiles);
  }
  return ex;
}

template <typename T>
fusion::FusedDecoderInput<T> GraphT5Model<T>::context(const Example &ex) {
  ++counters_.prompt_encoder_calls;
  const fusion::ContextSegment<T> prompt{text_.encode(ex.prompt), ex.prompt.mask};

  std::optional<ops::Tensor<T>> smiles;
  if (ablation_.encodes_smiles()) {
    ++counters_.smiles_encoder_calls;
    smiles = text_.encode(ex.smiles);
  }

  std::optional<ops::Tensor<T>> pooled;
  std::optional<fusion::ContextSegment<T>> graph;
  if (ablation_.use_graph) {
    if (!ex.graph) throw ContractError("example " + ex.id + " was prepared without a molecular graph");
    ++counters_.graph_encoder_calls;
    const auto emb = graph_->encode(*ex.graph);
    auto o_g = emb.values;
    if (ablation_.use_cross_token_attention) {
      ++counters_.cross_token_attention_calls;
      o_g = fusion::cross_token_attention(*cta_, emb, *smiles, ex.smiles.mask);
    }
    pooled = fusion::mean_pool(o_g, emb.mask);
    graph = fusion::ContextSegment<T>{o_g, emb.mask};
  }

  std::optional<fusion::ContextSegment<T>> smiles_segment;
  if (ablation_.use_smiles) smiles_segment = fusion::ContextSegment<T>{*smiles, ex.smiles.mask};
  return fusion::assemble_decoder_input(prompt, pooled, graph, smiles_segment);
}

template <typename T>
ops::Tensor<T> GraphT5Model<T>::loss(const Example &ex) {
  const auto ctx = context(ex);
  ++counters_.decoder_calls;
  // Decoder attention is causal and pad targets carry no loss, so positions
  // after the last real target token can be skipped.
  std::size_t used = ex.target.ids.size();
  while (used > 1 && ex.target.ids[used - 1] == text_model::kPadId) --used;
  const auto targets = std::span<const ops::TokenId>(ex.target.ids).first(used);
  const auto logits = text_.decode(ctx, text_model::shift_right(targets));
  return ops::cross_entropy(logits, targets, text_model::kPadId);
}

template <typename T>
std::string GraphT5Model<T>::generate(const Example &ex, const Vocabulary &vocab,
                                      const text_model::DecodeOptions &options) {
  ops::NoGradScope<T> no_grad;
  const bool was_training = text_.training();
  text_.set_training(false);
  const auto ctx = context(ex);
  ++counters_.decoder_calls;
  auto out = text_model::generate(text_, vocab, ctx, options);
  text_.set_training(was_training);
  return out;
}

namespace {

constexpr const char *kAblationGraph = "ablation.use_graph";
constexpr const char *kAblationSmiles = "ablation.use_smiles";
constexpr const char *kAblationCta = "ablation.use_cross_token_attention";
constexpr const char *kVocabFingerprint = "vocab.fingerprint";
constexpr const char *kVocabSize = "vocab.size";

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

bool header_bool(const ops::CheckpointHeader &h, const char *key) {
  const auto it = h.find(key);
  if (it == h.end()) throw VersionError(std::string("checkpoint header lacks ") + key);
  return it->second == "true";
}

}  // namespace

template <typename T>
void save_model(const std::filesystem::path &path, const GraphT5Model<T> &model, const Vocabulary &vocab) {
  auto header = to_key_values(model.run_config());
  header[kAblationGraph] = model.ablation().use_graph ? "true" : "false";
  header[kAblationSmiles] = model.ablation().use_smiles ? "true" : "false";
  header[kAblationCta] = model.ablation().use_cross_token_attention ? "true" : "false";
  header[kVocabFingerprint] = hex(vocab.fingerprint());
  header[kVocabSize] = std::to_string(vocab.size());
  ops::save_checkpoint(path, header, model.store());
}

template <typename T>
std::unique_ptr<GraphT5Model<T>> load_model(const std::filesystem::path &path, const Vocabulary &vocab) {
  const auto ckpt = ops::read_checkpoint(path);
  const auto fp = ckpt.header.find(kVocabFingerprint);
  if (fp == ckpt.header.end()) throw VersionError("checkpoint " + path.string() + " records no vocabulary");
  if (fp->second != hex(vocab.fingerprint())) {
    throw VersionError("vocabulary fingerprint " + hex(vocab.fingerprint()) + " does not match checkpoint " +
                       fp->second + "; use the vocabulary saved with the checkpoint");
  }
  std::map<std::string, std::string> run_keys;
  for (const auto &[k, v] : ckpt.header) {
    if (k.rfind("ablation.", 0) != 0 && k.rfind("vocab.", 0) != 0) run_keys.emplace(k, v);
  }
  RunConfig run;
  try {
    run = from_key_values(run_keys);
  } catch (const ConfigError &e) {
    throw VersionError(std::string("checkpoint configuration is not readable: ") + e.what());
  }
  AblationConfig ablation{header_bool(ckpt.header, kAblationGraph), header_bool(ckpt.header, kAblationSmiles),
                          header_bool(ckpt.header, kAblationCta)};
  auto model = std::make_unique<GraphT5Model<T>>(run, ablation, vocab.size());
  ops::load_parameters(ckpt, model->store());
  return model;
}

template class GraphT5Model<float>;
template class GraphT5Model<double>;
template void save_model(const std::filesystem::path &, const GraphT5Model<float> &, const Vocabulary &);
template void save_model(const std::filesystem::path &, const GraphT5Model<double> &, const Vocabulary &);
template std::unique_ptr<GraphT5Model<float>> load_model(const std::filesystem::path &, const Vocabulary &);
template std::unique_ptr<GraphT5Model<double>> load_model(const std::filesystem::path &, const Vocabulary &);

}  // namespace grapht5::harness
