#include "grapht5/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "grapht5/error.hpp"

namespace grapht5::metrics {

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

NgramCounts ngram_counts(const Tokens &tokens, std::size_t n) {
  if (n == 0) throw ContractError("n-gram order must be at least 1");
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

namespace {

std::size_t clipped_overlap(const NgramCounts &candidate, const NgramCounts &reference) {
  std::size_t overlap = 0;
  for (const auto &[gram, count] : candidate) {
    const auto it = reference.find(gram);
    if (it != reference.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

double f1(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

ClippedCount modified_precision(const Tokens &candidate, const Tokens &reference, std::size_t n) {
  const auto cand = ngram_counts(candidate, n);
  ClippedCount out;
  out.matched = clipped_overlap(cand, ngram_counts(reference, n));
  out.total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  return out;
}

double bleu(const std::vector<Tokens> &candidates, const std::vector<Tokens> &references, std::size_t n_max) {
  if (candidates.empty()) throw ContractError("BLEU of an empty corpus");
  if (candidates.size() != references.size()) {
    throw ContractError("BLEU needs one reference per candidate (" + std::to_string(candidates.size()) + " vs " +
                        std::to_string(references.size()) + ")");
  }
  if (n_max == 0) throw ContractError("BLEU order must be at least 1");
  std::vector<std::size_t> matched(n_max, 0), total(n_max, 0);
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c += candidates[i].size();
    r += references[i].size();
    for (std::size_t n = 1; n <= n_max; ++n) {
      const auto counts = modified_precision(candidates[i], references[i], n);
      matched[n - 1] += counts.matched;
      total[n - 1] += counts.total;
    }
  }
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < n_max; ++n) {
    const double num = matched[n] == 0 ? kBleuEpsilon : static_cast<double>(matched[n]);
    const double den = total[n] == 0 ? 1.0 : static_cast<double>(total[n]);
    log_sum += std::log(num / den);
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n_max));
}

double rouge_n(const Tokens &candidate, const Tokens &reference, std::size_t n) {
  if (reference.empty()) throw ContractError("ROUGE needs a non-empty reference");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  if (cand.empty() || ref.empty()) return 0.0;
  const double overlap = static_cast<double>(clipped_overlap(cand, ref));
  const double cand_total = static_cast<double>(candidate.size() - n + 1);
  const double ref_total = static_cast<double>(reference.size() - n + 1);
  return f1(overlap / cand_total, overlap / ref_total);
}

std::size_t lcs_length(const Tokens &a, const Tokens &b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens &candidate, const Tokens &reference) {
  if (reference.empty()) throw ContractError("ROUGE-L needs a non-empty reference");
  if (candidate.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return f1(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

MeteorAlignment meteor_alignment(const Tokens &candidate, const Tokens &reference) {
  std::vector<bool> used(reference.size(), false);
  MeteorAlignment out;
  bool in_chunk = false;
  std::size_t last_ref = 0;
  for (const auto &token : candidate) {
    std::size_t j = 0;
    while (j < reference.size() && (used[j] || reference[j] != token)) ++j;
    if (j == reference.size()) {
      in_chunk = false;
      continue;
    }
    used[j] = true;
    ++out.matches;
    if (!in_chunk || j != last_ref + 1) ++out.chunks;
    in_chunk = true;
    last_ref = j;
  }
  return out;
}

double meteor(const Tokens &candidate, const Tokens &reference, const MeteorParams &params) {
  if (reference.empty()) throw ContractError("METEOR needs a non-empty reference");
  const auto align = meteor_alignment(candidate, reference);
  if (align.matches == 0) return 0.0;
  const double m = static_cast<double>(align.matches);
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  // P·R / (α·P + (1−α)·R), rearranged so that P == R gives exactly P.
  const double f_mean = precision * recall / (recall + params.alpha * (precision - recall));
  const double penalty =
      params.gamma * (std::pow(static_cast<double>(align.chunks), params.beta) / std::pow(m, params.beta));
  return f_mean * (1.0 - penalty);
}

MetricScores score_corpus(const std::vector<std::string> &predictions, const std::vector<std::string> &references) {
  if (predictions.size() != references.size()) {
    throw ContractError("predictions and references differ in length (" + std::to_string(predictions.size()) +
                        " vs " + std::to_string(references.size()) + ")");
  }
  if (predictions.empty()) throw ContractError("cannot score an empty corpus");
  std::vector<Tokens> cands, refs;
  cands.reserve(predictions.size());
  refs.reserve(references.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    cands.push_back(tokenize(predictions[i]));
    refs.push_back(tokenize(references[i]));
    if (refs.back().empty()) throw ContractError("reference " + std::to_string(i + 1) + " is empty");
  }
  MetricScores s;
  s.pairs = cands.size();
  s.bleu2 = bleu(cands, refs, 2);
  s.bleu4 = bleu(cands, refs, 4);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    s.meteor += meteor(cands[i], refs[i]);
    s.rouge1 += rouge_n(cands[i], refs[i], 1);
    s.rouge2 += rouge_n(cands[i], refs[i], 2);
    s.rouge_l += rouge_l(cands[i], refs[i]);
  }
  const double n = static_cast<double>(cands.size());
  s.meteor /= n;
  s.rouge1 /= n;
  s.rouge2 /= n;
  s.rouge_l /= n;
  return s;
}

std::string format_percent(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", score * 100.0);
  return buf;
}

std::vector<std::pair<std::string, double>> named_scores(const MetricScores &scores) {
  return {{"BLEU-2", scores.bleu2},  {"BLEU-4", scores.bleu4},  {"METEOR", scores.meteor},
          {"ROUGE-1", scores.rouge1}, {"ROUGE-2", scores.rouge2}, {"ROUGE-L", scores.rouge_l}};
}

}  // namespace grapht5::metrics
