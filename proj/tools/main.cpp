#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "grapht5/chem/smiles.hpp"
#include "grapht5/error.hpp"
#include "grapht5/harness/dataset.hpp"
#include "grapht5/harness/model.hpp"
#include "grapht5/harness/trainer.hpp"
#include "grapht5/metrics/metrics.hpp"

namespace fs = std::filesystem;
using namespace grapht5;
using harness::RunConfig;

namespace {

constexpr const char *kCheckpointFile = "model.ckpt";
constexpr const char *kVocabFile = "vocab.txt";

// Every RunConfig field is exposed as --field-name and may also be given in
// the subcommand's --config file as `field-name = value`.
struct RunFlags {
  std::string preset = "desk";
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option *> options;

  void attach(CLI::App &app) {
    app.add_option("--preset", preset, "Starting point before the config file and flags")
        ->check(CLI::IsMember({"desk", "paper", "tiny"}))
        ->capture_default_str();
    for (const auto &[key, def] : harness::to_key_values(RunConfig::desk())) {
      std::string flag = key;
      for (auto &c : flag) c = c == '_' ? '-' : c;
      options[key] = app.add_option("--" + flag, values[key], "RunConfig " + key + " (desk default " + def + ")");
    }
    app.add_option("--config", config_file, "key = value configuration file; flags take precedence")
        ->check(CLI::ExistingFile);
  }

  RunConfig resolve() const {
    RunConfig c = preset == "paper" ? RunConfig::paper_scale() : preset == "tiny" ? RunConfig::tiny() : RunConfig::desk();
    if (!config_file.empty()) {
      for (const auto &item : CLI::ConfigBase().from_file(config_file)) {
        if (item.name == "++" || item.name == "--") continue;
        std::string key = item.fullname();
        for (auto &ch : key) ch = ch == '-' ? '_' : ch;
        const auto it = options.find(key);
        if (it == options.end()) throw ConfigError(config_file + ": unknown key '" + item.fullname() + "'");
        if (it->second->count() == 0) harness::apply_key_value(c, key, CLI::detail::join(item.inputs, ","));
      }
    }
    for (const auto &[key, opt] : options) {
      if (opt->count() > 0) harness::apply_key_value(c, key, values.at(key));
    }
    c.validate();
    return c;
  }
};

std::vector<std::string> read_lines(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

harness::DatasetLoad load_records(const std::string &path, harness::Task task) {
  auto load = harness::load_dataset(path, task, &std::cerr);
  std::cerr << path << ": " << load.records.size() << " records loaded, " << load.skipped << " skipped\n";
  return load;
}

double round1(double score) { return std::round(score * 1000.0) / 10.0; }

nlohmann::ordered_json scores_json(const metrics::MetricScores &s) {
  nlohmann::ordered_json j;
  for (const auto &[name, value] : metrics::named_scores(s)) j[name] = round1(value);
  j["pairs"] = s.pairs;
  return j;
}

struct ModelDir {
  text_model::Vocabulary vocab;
  std::unique_ptr<harness::GraphT5Model<float>> model;
};

ModelDir open_model(const fs::path &dir) {
  ModelDir out;
  out.vocab = text_model::Vocabulary::load(dir / kVocabFile);
  out.model = harness::load_model<float>(dir / kCheckpointFile, out.vocab);
  return out;
}

void write_reports(const std::string &prefix, const std::string &table, const std::string &kv) {
  if (prefix.empty()) return;
  write_text(prefix + ".txt", table);
  write_text(prefix + ".kv", kv);
  std::cerr << "reports written to " << prefix << ".txt and " << prefix << ".kv\n";
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"GraphT5: molecule captioning from SMILES and molecular graphs"};
  app.require_subcommand(1);

  // train
  auto *train = app.add_subcommand("train", "Train a model and write model.ckpt + vocab.txt");
  RunFlags train_flags;
  std::string train_data, train_out = "run", train_ablation = "G+S+CTA", train_eval;
  train->add_option("--data", train_data, "Training TSV (cid, smiles, description)")->required();
  train->add_option("--out", train_out, "Output directory")->capture_default_str();
  train->add_option("--ablation", train_ablation, "S, G, G+CTA, G+S or G+S+CTA")->capture_default_str();
  train->add_option("--eval", train_eval, "Optional TSV evaluated after training");
  train_flags.attach(*train);

  // eval
  auto *eval = app.add_subcommand("eval", "Generate captions for a dataset and score them");
  std::string eval_model, eval_data, eval_report;
  bool eval_buckets = false;
  eval->add_option("--model", eval_model, "Directory written by train")->required();
  eval->add_option("--data", eval_data, "Evaluation TSV")->required();
  eval->add_flag("--buckets", eval_buckets, "Also score short/medium/long description buckets (34/48 words)");
  eval->add_option("--report", eval_report, "Write <prefix>.txt and <prefix>.kv");

  // generate
  auto *gen = app.add_subcommand("generate", "Caption one SMILES string");
  std::string gen_model, gen_smiles, gen_task = "caption", gen_decode;
  std::size_t gen_beam = 0;
  gen->add_option("--model", gen_model, "Directory written by train")->required();
  gen->add_option("--smiles", gen_smiles, "Input molecule")->required();
  gen->add_option("--task", gen_task, "caption or iupac")->capture_default_str();
  gen->add_option("--decode", gen_decode, "greedy or beam (defaults to the trained setting)");
  gen->add_option("--beam-width", gen_beam, "Beam width");

  // ablate
  auto *abl = app.add_subcommand("ablate", "Train and score the five modality configurations");
  RunFlags abl_flags;
  std::string abl_data, abl_eval, abl_report;
  abl->add_option("--data", abl_data, "Training TSV")->required();
  abl->add_option("--eval", abl_eval, "Evaluation TSV (defaults to the training data)");
  abl->add_option("--report", abl_report, "Write <prefix>.txt and <prefix>.kv");
  abl_flags.attach(*abl);

  // metrics
  auto *met = app.add_subcommand("metrics", "Score aligned prediction/reference files");
  std::string met_pred, met_ref;
  met->add_option("--predictions", met_pred, "One prediction per line")->required();
  met->add_option("--references", met_ref, "One reference per line")->required();

  // utilities
  auto *synth = app.add_subcommand("synth", "Write a synthetic SMILES/caption TSV");
  std::size_t synth_count = 64;
  std::uint64_t synth_seed = 7;
  std::string synth_out;
  synth->add_option("--count", synth_count, "Number of pairs")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Shuffle seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output TSV")->required();

  auto *parse = app.add_subcommand("parse", "Print the molecular graph of a SMILES string");
  std::string parse_smiles;
  parse->add_option("smiles", parse_smiles, "SMILES string")->required();

  auto *buckets = app.add_subcommand("buckets", "Count descriptions per length bucket");
  std::string buckets_data, buckets_lengths;
  std::size_t lo = harness::kDefaultBucketBoundaries.first, hi = harness::kDefaultBucketBoundaries.second;
  bool quantile = false;
  buckets->add_option("--data", buckets_data, "Dataset TSV");
  buckets->add_option("--lengths", buckets_lengths, "File with one word count per line");
  buckets->add_option("--short-max", lo, "Longest short description")->capture_default_str();
  buckets->add_option("--medium-max", hi, "Longest medium description")->capture_default_str();
  buckets->add_flag("--quantile", quantile, "Choose boundaries that split the data into equal thirds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto run = train_flags.resolve();
      const auto ablation = harness::AblationConfig::parse(train_ablation);
      const auto data = load_records(train_data, run.task);
      if (data.records.empty()) throw ContractError("no usable training records in " + train_data);
      const auto vocab = harness::build_vocabulary(data.records, run.vocab_size);
      harness::GraphT5Model<float> model(run, ablation, vocab.size());
      std::vector<harness::Example> examples;
      for (const auto &r : data.records) examples.push_back(model.prepare(r, vocab));
      std::cerr << "ablation " << ablation.label() << ", vocabulary " << vocab.size() << ", parameters "
                << model.store().scalar_count() << '\n';
      harness::TrainOptions options;
      options.log = &std::cout;
      const auto t0 = std::chrono::steady_clock::now();
      const auto result = harness::train(model, examples, options);
      const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fs::create_directories(train_out);
      harness::save_model(fs::path(train_out) / kCheckpointFile, model, vocab);
      vocab.save(fs::path(train_out) / kVocabFile);
      std::ostringstream losses;
      for (std::size_t i = 0; i < result.step_losses.size(); ++i) losses << (i + 1) << '\t' << result.step_losses[i] << '\n';
      write_text(fs::path(train_out) / "losses.tsv", losses.str());
      std::cout << "trained " << result.steps << " steps in " << secs << " s; checkpoint in " << train_out << '\n';
      if (!train_eval.empty()) {
        const auto eval_data_load = load_records(train_eval, run.task);
        std::cout << harness::format_evaluation(harness::evaluate(model, vocab, eval_data_load.records, true));
      }
    } else if (*eval) {
      auto dir = open_model(eval_model);
      const auto data = load_records(eval_data, dir.model->run_config().task);
      const auto report = harness::evaluate(*dir.model, dir.vocab, data.records, eval_buckets);
      const auto table = harness::format_evaluation(report);
      std::cout << table;
      write_reports(eval_report, table, harness::evaluation_key_values(report));
    } else if (*gen) {
      auto dir = open_model(gen_model);
      auto options = dir.model->run_config().decode_options();
      if (gen_decode == "greedy") options.strategy = text_model::DecodeStrategy::kGreedy;
      else if (gen_decode == "beam") options.strategy = text_model::DecodeStrategy::kBeam;
      else if (!gen_decode.empty()) throw ConfigError("decode must be greedy or beam");
      if (gen_beam != 0) options.beam_width = gen_beam;
      const harness::CaptionRecord record{"input", gen_smiles, "-", harness::parse_task(gen_task)};
      (void)chem::smiles_to_graph(gen_smiles);
      const auto ex = dir.model->prepare(record, dir.vocab);
      std::cout << dir.model->generate(ex, dir.vocab, options) << '\n';
    } else if (*abl) {
      const auto run = abl_flags.resolve();
      const auto train_load = load_records(abl_data, run.task);
      const auto eval_load = abl_eval.empty() ? train_load : load_records(abl_eval, run.task);
      const auto vocab = harness::build_vocabulary(train_load.records, run.vocab_size);
      const auto rows = harness::ablate(run, vocab, train_load.records, eval_load.records, &std::cerr);
      const auto table = harness::format_ablation(rows);
      std::cout << table;
      write_reports(abl_report, table, harness::ablation_key_values(rows));
    } else if (*met) {
      const auto pred = read_lines(met_pred);
      const auto ref = read_lines(met_ref);
      const auto scores = metrics::score_corpus(pred, ref);
      std::cout << scores_json(scores).dump(2) << '\n';
    } else if (*synth) {
      harness::write_dataset(synth_out, harness::synthetic_corpus(synth_count, synth_seed));
      std::cout << "wrote " << synth_count << " pairs to " << synth_out << '\n';
    } else if (*parse) {
      std::cout << chem::dump_graph(chem::smiles_to_graph(parse_smiles));
    } else if (*buckets) {
      std::vector<std::size_t> lengths;
      if (!buckets_data.empty()) {
        for (const auto &r : load_records(buckets_data, harness::Task::kCaption).records)
          lengths.push_back(harness::word_count(r.description));
      } else if (!buckets_lengths.empty()) {
        for (const auto &line : read_lines(buckets_lengths)) {
          if (line.empty() || line.front() == '#') continue;
          try {
            lengths.push_back(std::stoul(line));
          } catch (const std::exception &) {
            throw FormatError(buckets_lengths + ": not a word count: '" + line + "'");
          }
        }
      } else {
        throw ConfigError("buckets needs --data or --lengths");
      }
      const auto bounds = quantile ? harness::quantile_boundaries(lengths) : std::make_pair(lo, hi);
      const auto groups = harness::split_lengths(lengths, bounds);
      std::cout << "boundaries " << bounds.first << " " << bounds.second << '\n';
      for (std::size_t b = 0; b < 3; ++b) {
        std::cout << harness::bucket_name(static_cast<harness::LengthBucket>(b)) << ' ' << groups[b].size() << '\n';
      }
    }
  } catch (const Error &e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
