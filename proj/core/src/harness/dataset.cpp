#include "grapht5/harness/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "grapht5/chem/smiles.hpp"
#include "grapht5/error.hpp"

namespace grapht5::harness {

namespace {

std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

void strip_cr(std::string &line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

DatasetLoad read_dataset(std::istream &in, Task task, const std::string &source, std::ostream *warn) {
  DatasetLoad out;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ":1: missing header 'cid\\tsmiles\\tdescription'");
  strip_cr(line);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_tabs(line);
  if (header != std::vector<std::string>{"cid", "smiles", "description"}) {
    throw FormatError(source + ":1: expected header 'cid\\tsmiles\\tdescription', got '" + line + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    ++out.rows;
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected 3 tab-separated columns, found " +
                        std::to_string(cols.size()));
    }
    if (cols[2].empty()) throw FormatError(source + ":" + std::to_string(line_no) + ": empty description");
    try {
      (void)chem::smiles_to_graph(cols[1]);
    } catch (const Error &e) {
      ++out.skipped;
      auto msg = source + ":" + std::to_string(line_no) + ": skipping " + cols[0] + " (" +
                 std::string(category_name(e.category())) + ": " + e.what() + ")";
      if (warn) *warn << "warning: " << msg << '\n';
      out.warnings.push_back(std::move(msg));
      continue;
    }
    out.records.push_back(CaptionRecord{cols[0], cols[1], cols[2], task});
  }
  return out;
}

DatasetLoad load_dataset(const std::filesystem::path &path, Task task, std::ostream *warn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_dataset(in, task, path.string(), warn);
}

void write_dataset(const std::filesystem::path &path, const std::vector<CaptionRecord> &records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out << "cid\tsmiles\tdescription\n";
  for (const auto &r : records) {
    if (r.description.find_first_of("\t\n") != std::string::npos || r.smiles.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("record " + r.id + " contains a tab or newline");
    }
    out << r.id << '\t' << r.smiles << '\t' << r.description << '\n';
  }
  if (!out) throw IoError("failed writing dataset " + path.string());
}

std::string build_prompt(Task task) {
  switch (task) {
    case Task::kCaption: return "Caption the following molecule:";
    case Task::kIupac: return "Predict IUPAC name of the following molecule:";
  }
  throw ConfigError("unknown task");
}

std::string build_prompt(std::string_view task) { return build_prompt(parse_task(task)); }

std::size_t word_count(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::string_view bucket_name(LengthBucket bucket) {
  switch (bucket) {
    case LengthBucket::kShort: return "short";
    case LengthBucket::kMedium: return "medium";
    case LengthBucket::kLong: return "long";
  }
  return "?";
}

LengthBucket bucket_of(std::size_t length, std::pair<std::size_t, std::size_t> boundaries) {
  if (boundaries.first > boundaries.second) throw ConfigError("bucket boundaries must be ordered");
  if (length <= boundaries.first) return LengthBucket::kShort;
  if (length <= boundaries.second) return LengthBucket::kMedium;
  return LengthBucket::kLong;
}

std::array<std::vector<std::size_t>, 3> split_lengths(const std::vector<std::size_t> &lengths,
                                                      std::pair<std::size_t, std::size_t> boundaries) {
  std::array<std::vector<std::size_t>, 3> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    out[static_cast<std::size_t>(bucket_of(lengths[i], boundaries))].push_back(i);
  }
  return out;
}

std::array<std::vector<CaptionRecord>, 3> split_by_length(const std::vector<CaptionRecord> &records,
                                                          std::pair<std::size_t, std::size_t> boundaries) {
  std::array<std::vector<CaptionRecord>, 3> out;
  for (const auto &r : records) {
    out[static_cast<std::size_t>(bucket_of(word_count(r.description), boundaries))].push_back(r);
  }
  return out;
}

std::pair<std::size_t, std::size_t> quantile_boundaries(std::vector<std::size_t> lengths) {
  if (lengths.empty()) throw ContractError("quantile boundaries of an empty length list");
  std::sort(lengths.begin(), lengths.end());
  const auto n = lengths.size();
  const auto first = (n + 2) / 3;       // ceil(n/3)
  const auto second = (2 * n + 2) / 3;  // ceil(2n/3)
  return {lengths[first - 1], lengths[second - 1]};
}

namespace {

struct Scaffold {
  const char *smiles;
  const char *name;
};

struct Substituent {
  const char *prefix;  // written before the scaffold
  const char *suffix;  // written after the scaffold
  const char *name;
};

constexpr Scaffold kScaffolds[] = {
    {"c1ccccc1", "benzene ring"},   {"C1CCCCC1", "cyclohexane ring"}, {"c1ccncc1", "pyridine ring"},
    {"C1CCCC1", "cyclopentane ring"}, {"c1ccoc1", "furan ring"},      {"c1ccsc1", "thiophene ring"},
    {"CCCC", "butane chain"},       {"CCCCCC", "hexane chain"},
};

constexpr Substituent kSubstituents[] = {
    {"O", "O", "hydroxy"},
    {"N", "N", "amino"},
    {"Cl", "Cl", "chloro"},
    {"Br", "Br", "bromo"},
    {"F", "F", "fluoro"},
    {"OC(=O)", "C(=O)O", "carboxy"},
    {"N#C", "C#N", "cyano"},
    {"O=[N+]([O-])", "[N+](=O)[O-]", "nitro"},
    {"CO", "OC", "methoxy"},
    {"S", "S", "sulfanyl"},
};

std::string article(std::string_view word) {
  return std::string_view("aeiou").find(word.front()) != std::string_view::npos ? "an" : "a";
}

}  // namespace

std::vector<CaptionRecord> synthetic_corpus(std::size_t count, std::uint64_t seed) {
  std::vector<CaptionRecord> all;
  constexpr std::size_t kSubs = std::size(kSubstituents);
  for (const auto &sc : kScaffolds) {
    for (std::size_t a = 0; a < kSubs; ++a) {
      const auto &s1 = kSubstituents[a];
      CaptionRecord one;
      one.smiles = std::string(s1.prefix) + sc.smiles;
      one.description = "The molecule is " + article(sc.name) + " " + sc.name + " bearing " + article(s1.name) + " " +
                        s1.name + " group.";
      all.push_back(std::move(one));
      for (std::size_t b = 0; b < kSubs; ++b) {
        const auto &s2 = kSubstituents[b];
        CaptionRecord two;
        two.smiles = std::string(s1.prefix) + sc.smiles + s2.suffix;
        two.description = a == b ? "The molecule is " + article(sc.name) + " " + sc.name + " bearing two " +
                                       s1.name + " groups."
                                 : "The molecule is " + article(sc.name) + " " + sc.name + " bearing " +
                                       article(s1.name) + " " + s1.name + " group and " + article(s2.name) + " " +
                                       s2.name + " group.";
        all.push_back(std::move(two));
      }
    }
  }
  if (count > all.size()) {
    throw ConfigError("synthetic corpus holds at most " + std::to_string(all.size()) + " distinct pairs");
  }
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw keeps the order identical across
  // standard library implementations.
  for (std::size_t i = all.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(all[i - 1], all[j]);
  }
  all.resize(count);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].id = "SYN" + std::to_string(i + 1);
  return all;
}

}  // namespace grapht5::harness
