#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grapht5/harness/config.hpp"

namespace grapht5::harness {

struct CaptionRecord {
  std::string id;
  std::string smiles;
  std::string description;
  Task task = Task::kCaption;
};

struct DatasetLoad {
  std::vector<CaptionRecord> records;
  std::size_t rows = 0;     // data rows in the file, header excluded
  std::size_t skipped = 0;  // rows whose SMILES failed to parse
  std::vector<std::string> warnings;
};

// Tab-separated `cid  smiles  description` with that header line. Rows with
// unparseable SMILES are skipped and reported; structural problems (missing
// header, wrong column count, empty description) raise FormatError naming the
// line. If `warn` is set each skipped row is also written there.
DatasetLoad load_dataset(const std::filesystem::path &path, Task task, std::ostream *warn = nullptr);
DatasetLoad read_dataset(std::istream &in, Task task, const std::string &source, std::ostream *warn = nullptr);
void write_dataset(const std::filesystem::path &path, const std::vector<CaptionRecord> &records);

std::string build_prompt(Task task);
std::string build_prompt(std::string_view task);

std::size_t word_count(std::string_view text);

inline constexpr std::pair<std::size_t, std::size_t> kDefaultBucketBoundaries{34, 48};

enum class LengthBucket { kShort = 0, kMedium = 1, kLong = 2 };
std::string_view bucket_name(LengthBucket bucket);

// short: len <= lo, medium: lo < len <= hi, long: len > hi.
LengthBucket bucket_of(std::size_t length, std::pair<std::size_t, std::size_t> boundaries);

// Record indices per bucket, in input order.
std::array<std::vector<std::size_t>, 3> split_lengths(const std::vector<std::size_t> &lengths,
                                                      std::pair<std::size_t, std::size_t> boundaries);
std::array<std::vector<CaptionRecord>, 3> split_by_length(
    const std::vector<CaptionRecord> &records,
    std::pair<std::size_t, std::size_t> boundaries = kDefaultBucketBoundaries);

// Boundaries at the 1/3 and 2/3 order statistics, so distinct lengths fall
// into three groups whose sizes differ by at most one.
std::pair<std::size_t, std::size_t> quantile_boundaries(std::vector<std::size_t> lengths);

// Deterministic template corpus: aromatic and aliphatic scaffolds decorated
// with substituents, each paired with a matching sentence.
std::vector<CaptionRecord> synthetic_corpus(std::size_t count, std::uint64_t seed);

}  // namespace grapht5::harness
