#include "grapht5/harness/config.hpp"

#include <charconv>
#include <sstream>

#include "grapht5/error.hpp"

namespace grapht5::harness {

Task parse_task(std::string_view name) {
  if (name == "caption") return Task::kCaption;
  if (name == "iupac") return Task::kIupac;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected caption or iupac)");
}

std::string_view task_name(Task task) { return task == Task::kCaption ? "caption" : "iupac"; }

void AblationConfig::validate() const {
  if (!use_graph && !use_smiles) throw ConfigError("ablation must keep at least one of graph or SMILES input");
  if (use_cross_token_attention && !use_graph) throw ConfigError("cross-token attention requires the graph input");
}

std::string AblationConfig::label() const {
  std::string out;
  if (use_graph) out += "G";
  if (use_smiles) out += out.empty() ? "S" : "+S";
  if (use_cross_token_attention) out += "+CTA";
  return out;
}

std::vector<AblationConfig> AblationConfig::table_rows() {
  return {
      {false, true, false},
      {true, false, false},
      {true, false, true},
      {true, true, false},
      {true, true, true},
  };
}

AblationConfig AblationConfig::parse(std::string_view label) {
  for (const auto &row : table_rows()) {
    if (row.label() == label) return row;
  }
  throw ConfigError("unknown ablation '" + std::string(label) + "' (expected S, G, G+CTA, G+S or G+S+CTA)");
}

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char *name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(smiles_len, "smiles_len");
  positive(target_len, "target_len");
  positive(prompt_len, "prompt_len");
  positive(graph_len, "graph_len");
  positive(width, "width");
  positive(graph_hidden, "graph_hidden");
  positive(ff_width, "ff_width");
  positive(vocab_size, "vocab_size");
  positive(cta_heads, "cta_heads");
  positive(beam_width, "beam_width");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (width % heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (width % cta_heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by " + std::to_string(cta_heads) +
                      " cross-token attention heads");
  }
}

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper_scale() {
  RunConfig c;
  c.epochs = 120;
  c.learning_rate = 1e-4;
  c.batch_size = 14;
  c.dropout = 0.1;
  c.layers = 12;
  c.heads = 12;
  c.width = 768;
  c.ff_width = 3072;
  c.graph_hidden = 300;
  c.smiles_len = 512;
  c.target_len = 512;
  c.vocab_size = 32100;
  return c;
}

RunConfig RunConfig::tiny() {
  RunConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.dropout = 0.0;
  c.layers = 2;
  c.heads = 2;
  c.width = 16;
  c.graph_hidden = 8;
  c.ff_width = 32;
  c.smiles_len = 24;
  c.target_len = 16;
  c.prompt_len = 8;
  c.graph_len = 8;
  c.vocab_size = 64;
  return c;
}

text_model::DecodeOptions RunConfig::decode_options() const {
  text_model::DecodeOptions o;
  o.strategy = decode;
  o.beam_width = beam_width;
  o.max_len = target_len;
  return o;
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename U>
U parse_number(const std::string &key, const std::string &value) {
  U out{};
  const auto *first = value.data();
  const auto *last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<U>) {
    try {
      std::size_t used = 0;
      out = static_cast<U>(std::stod(value, &used));
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception &) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
    }
  } else {
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) {
      throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
    }
  }
  return out;
}

bool parse_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

std::map<std::string, std::string> to_key_values(const RunConfig &c) {
  return {
      {"task", std::string(task_name(c.task))},
      {"epochs", std::to_string(c.epochs)},
      {"learning_rate", format_double(c.learning_rate)},
      {"batch_size", std::to_string(c.batch_size)},
      {"dropout", format_double(c.dropout)},
      {"weight_decay", format_double(c.weight_decay)},
      {"layers", std::to_string(c.layers)},
      {"heads", std::to_string(c.heads)},
      {"seed", std::to_string(c.seed)},
      {"smiles_len", std::to_string(c.smiles_len)},
      {"target_len", std::to_string(c.target_len)},
      {"prompt_len", std::to_string(c.prompt_len)},
      {"graph_len", std::to_string(c.graph_len)},
      {"width", std::to_string(c.width)},
      {"graph_hidden", std::to_string(c.graph_hidden)},
      {"ff_width", std::to_string(c.ff_width)},
      {"vocab_size", std::to_string(c.vocab_size)},
      {"cta_heads", std::to_string(c.cta_heads)},
      {"cta_post_self_attention", c.cta_post_self_attention ? "true" : "false"},
      {"max_steps", std::to_string(c.max_steps)},
      {"decode", c.decode == text_model::DecodeStrategy::kGreedy ? "greedy" : "beam"},
      {"beam_width", std::to_string(c.beam_width)},
  };
}

void apply_key_value(RunConfig &c, const std::string &key, const std::string &value) {
  using text_model::DecodeStrategy;
  if (key == "task") c.task = parse_task(value);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "dropout") c.dropout = parse_number<double>(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
  else if (key == "layers") c.layers = parse_number<std::size_t>(key, value);
  else if (key == "heads") c.heads = parse_number<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "smiles_len") c.smiles_len = parse_number<std::size_t>(key, value);
  else if (key == "target_len") c.target_len = parse_number<std::size_t>(key, value);
  else if (key == "prompt_len") c.prompt_len = parse_number<std::size_t>(key, value);
  else if (key == "graph_len") c.graph_len = parse_number<std::size_t>(key, value);
  else if (key == "width") c.width = parse_number<std::size_t>(key, value);
  else if (key == "graph_hidden") c.graph_hidden = parse_number<std::size_t>(key, value);
  else if (key == "ff_width") c.ff_width = parse_number<std::size_t>(key, value);
  else if (key == "vocab_size") c.vocab_size = parse_number<std::size_t>(key, value);
  else if (key == "cta_heads") c.cta_heads = parse_number<std::size_t>(key, value);
  else if (key == "cta_post_self_attention") c.cta_post_self_attention = parse_bool(key, value);
  else if (key == "max_steps") c.max_steps = parse_number<std::size_t>(key, value);
  else if (key == "beam_width") c.beam_width = parse_number<std::size_t>(key, value);
  else if (key == "decode") {
    if (value == "greedy") c.decode = DecodeStrategy::kGreedy;
    else if (value == "beam") c.decode = DecodeStrategy::kBeam;
    else throw ConfigError("decode must be greedy or beam, got '" + value + "'");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig from_key_values(const std::map<std::string, std::string> &values) {
  RunConfig c;
  for (const auto &[k, v] : values) apply_key_value(c, k, v);
  c.validate();
  return c;
}

}  // namespace grapht5::harness
