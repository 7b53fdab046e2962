#include "grapht5/text_model/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "grapht5/error.hpp"

namespace grapht5::text_model {

namespace {

constexpr std::string_view kReserved[kReservedCount] = {"<pad>", "</s>", "<unk>"};

std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> pieces;
  std::string current;
  for (const char c : text) {
    if (c == ' ' && !current.empty()) {
      pieces.push_back(std::move(current));
      current.clear();
    }
    current.push_back(c);
  }
  if (!current.empty()) pieces.push_back(std::move(current));
  return pieces;
}

std::string escape(std::string_view token) {
  std::string out;
  for (const char c : token) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape(std::string_view line, std::size_t line_no) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out.push_back(line[i]);
      continue;
    }
    if (++i == line.size()) throw FormatError("vocabulary line " + std::to_string(line_no) + " ends in '\\'");
    switch (line[i]) {
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: throw FormatError("vocabulary line " + std::to_string(line_no) + " has an unknown escape");
    }
  }
  return out;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto r : kReserved) add_token(std::string(r));
}

void Vocabulary::add_token(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (!index_.emplace(token, id).second) throw FormatError("duplicate vocabulary token '" + escape(token) + "'");
  longest_ = std::max(longest_, token.size());
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string> &corpus, std::size_t target_size) {
  if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  std::set<unsigned char> alphabet;
  std::map<std::string, long> piece_counts;
  for (const auto &text : corpus) {
    for (const char c : text) alphabet.insert(static_cast<unsigned char>(c));
    for (auto &piece : split_pieces(text)) ++piece_counts[piece];
  }
  Vocabulary vocab;
  for (const auto c : alphabet) vocab.add_token(std::string(1, static_cast<char>(c)));
  vocab.base_size_ = vocab.size();
  if (target_size < vocab.base_size_) {
    throw ConfigError("vocabulary size " + std::to_string(target_size) + " is smaller than the base alphabet (" +
                      std::to_string(vocab.base_size_) + " symbols)");
  }

  struct Word {
    std::vector<std::string> symbols;
    long count;
  };
  std::vector<Word> words;
  for (const auto &[piece, count] : piece_counts) {
    Word w{{}, count};
    for (const char c : piece) w.symbols.emplace_back(1, c);
    words.push_back(std::move(w));
  }

  const std::set<std::string> reserved(std::begin(kReserved), std::end(kReserved));
  while (vocab.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto &w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    const std::pair<std::string, std::string> *best = nullptr;
    long best_count = 0;
    for (const auto &[pair, count] : pairs) {
      if (reserved.count(pair.first + pair.second)) continue;
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr) break;
    const auto [left, right] = *best;
    const std::string merged = left + right;
    for (auto &w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(std::move(w.symbols[i]));
        }
      }
      w.symbols = std::move(next);
    }
    vocab.merges_.emplace_back(left, right);
    if (!vocab.contains(merged)) vocab.add_token(merged);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  bool in_base = true;
  while (std::getline(is, line)) {
    if (line_no < kReservedCount) {
      if (line != kReserved[line_no]) {
        throw FormatError("vocabulary line " + std::to_string(line_no + 1) + " must be the reserved token " +
                          std::string(kReserved[line_no]));
      }
    } else {
      auto token = unescape(line, line_no + 1);
      if (token.empty()) throw FormatError("vocabulary line " + std::to_string(line_no + 1) + " is empty");
      if (in_base && token.size() == 1) {
        vocab.add_token(std::move(token));
        vocab.base_size_ = vocab.size();
      } else {
        in_base = false;
        vocab.add_token(std::move(token));
      }
    }
    ++line_no;
  }
  if (line_no < kReservedCount) throw FormatError("vocabulary " + path.string() + " lacks the reserved tokens");
  return vocab;
}

void Vocabulary::save(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto &t : tokens_) os << escape(t) << '\n';
  if (!os) throw IoError("failed while writing " + path.string());
}

const std::string &Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto &t : tokens_) {
    for (const char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xffU;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<TokenId> Vocabulary::segment(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t i = 0;
  std::string probe;
  while (i < text.size()) {
    TokenId found = kUnkId;
    std::size_t len = std::min(longest_, text.size() - i);
    for (; len > 0; --len) {
      probe.assign(text.substr(i, len));
      const auto it = index_.find(probe);
      if (it != index_.end() && static_cast<std::size_t>(it->second) >= kReservedCount) {
        found = it->second;
        break;
      }
    }
    ids.push_back(found);
    i += std::max<std::size_t>(len, 1);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const auto id : ids) {
    if (id == kEosId) break;
    if (id == kPadId) continue;
    out += token(id);
  }
  return out;
}

TokenSequence encode_text(const Vocabulary &vocab, std::string_view text, std::size_t budget, bool append_eos) {
  if (budget == 0) throw ConfigError("token budget must be at least 1");
  TokenSequence seq;
  seq.raw_text = std::string(text);
  seq.ids = vocab.segment(text);
  const std::size_t keep = append_eos ? budget - 1 : budget;
  if (seq.ids.size() > keep) seq.ids.resize(keep);
  if (append_eos) seq.ids.push_back(kEosId);
  seq.ids.resize(budget, kPadId);
  seq.mask.resize(budget);
  for (std::size_t i = 0; i < budget; ++i) seq.mask[i] = seq.ids[i] != kPadId;
  return seq;
}

}  // namespace grapht5::text_model
