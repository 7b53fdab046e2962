#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "grapht5/numerics/ops.hpp"

namespace grapht5::text_model {

using numerics::Mask;
using numerics::TokenId;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr std::size_t kReservedCount = 3;

struct TokenSequence {
  std::vector<TokenId> ids;  // fixed length after padding
  Mask mask;                 // false exactly where ids[i] == kPadId
  std::string raw_text;

  std::size_t length() const { return ids.size(); }
  std::size_t valid_count() const { return numerics::count_true(mask); }
};

// Byte-level subword vocabulary. Ids 0..2 are <pad>, </s>, <unk>; then every
// byte value seen in the training corpus (ascending); then learned merges in
// the order they were found.
class Vocabulary {
 public:
  Vocabulary();

  // Greedy pair merging over whitespace-delimited pieces (a space attaches to
  // the piece that follows it). Each round merges the most frequent adjacent
  // pair, ties broken by the lexicographically smallest (left, right). Stops
  // at target_size or when no pair remains. ConfigError when target_size is
  // below the reserved + byte alphabet size.
  static Vocabulary build(const std::vector<std::string> &corpus, std::size_t target_size);

  // One token per line, line number = id; backslash escapes for \\, \n, \t, \r.
  static Vocabulary load(const std::filesystem::path &path);
  void save(const std::filesystem::path &path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t base_size() const { return base_size_; }
  const std::string &token(TokenId id) const;
  TokenId id_of(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  const std::vector<std::pair<std::string, std::string>> &merges() const { return merges_; }

  // FNV-1a over the token list; used to match checkpoints with vocabularies.
  std::uint64_t fingerprint() const;

  // Greedy longest-match segmentation; bytes outside the vocabulary map to <unk>.
  std::vector<TokenId> segment(std::string_view text) const;

  // Concatenates token strings, skipping <pad> and stopping at </s>.
  std::string decode(std::span<const TokenId> ids) const;

 private:
  void add_token(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::size_t base_size_ = kReservedCount;
  std::size_t longest_ = 1;
};

// Segments, truncates and pads to exactly `budget` ids. With append_eos the
// text is cut to budget-1 tokens and </s> follows it.
TokenSequence encode_text(const Vocabulary &vocab, std::string_view text, std::size_t budget,
                          bool append_eos = false);

}  // namespace grapht5::text_model
