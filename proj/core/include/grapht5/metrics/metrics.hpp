#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace grapht5::metrics {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

// Lowercases, splits on whitespace and makes every ASCII punctuation
// character its own token: "Acid, (R)-form." -> acid , ( r ) - form .
Tokens tokenize(std::string_view text);

NgramCounts ngram_counts(const Tokens &tokens, std::size_t n);

// Candidate n-grams clipped by their reference count, over all candidate n-grams.
struct ClippedCount {
  std::size_t matched = 0;
  std::size_t total = 0;
};
ClippedCount modified_precision(const Tokens &candidate, const Tokens &reference, std::size_t n);

inline constexpr double kBleuEpsilon = 1e-9;

// Corpus BLEU with uniform weights over orders 1..n_max. Clipped counts are
// summed over the corpus; a zero matched count is replaced by kBleuEpsilon.
// Brevity penalty exp(1 - r/c) when c < r. ContractError on an empty or
// misaligned corpus.
double bleu(const std::vector<Tokens> &candidates, const std::vector<Tokens> &references, std::size_t n_max);

// F1 of clipped n-gram overlap. Zero when either side has no n-grams.
double rouge_n(const Tokens &candidate, const Tokens &reference, std::size_t n);

std::size_t lcs_length(const Tokens &a, const Tokens &b);
double rouge_l(const Tokens &candidate, const Tokens &reference);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Exact-match unigram alignment: each candidate token, left to right, takes
// the leftmost unused equal reference token. Chunks are maximal runs that are
// contiguous in both strings.
MeteorAlignment meteor_alignment(const Tokens &candidate, const Tokens &reference);
double meteor(const Tokens &candidate, const Tokens &reference, const MeteorParams &params = {});

// All six scores in [0, 1]. BLEU is corpus-level; METEOR and ROUGE are
// averaged over pairs.
struct MetricScores {
  double bleu2 = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  std::size_t pairs = 0;
};

MetricScores score_corpus(const std::vector<std::string> &predictions, const std::vector<std::string> &references);

// Score in [0,1] as a percentage rounded to one decimal, e.g. 0.6384 -> "63.8".
std::string format_percent(double score);

// (column name, score) in table order: BLEU-2, BLEU-4, METEOR, ROUGE-1,
// ROUGE-2, ROUGE-L.
std::vector<std::pair<std::string, double>> named_scores(const MetricScores &scores);

}  // namespace grapht5::metrics
