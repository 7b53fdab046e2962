#include "grapht5/text_model/generate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "grapht5/error.hpp"

namespace grapht5::text_model {

std::vector<double> log_softmax(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("log_softmax of an empty score vector");
  const double hi = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (const double s : scores) z += std::exp(s - hi);
  const double lse = hi + std::log(z);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
  return out;
}

std::vector<TokenId> greedy_decode(const NextTokenScores &next, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  std::vector<TokenId> out;
  while (out.size() < max_len) {
    const auto lp = log_softmax(next(out));
    // max_element returns the first maximum: lowest index wins ties.
    const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == kEosId) break;
    out.push_back(best);
  }
  return out;
}

std::vector<TokenId> beam_decode(const NextTokenScores &next, std::size_t width, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (width == 0) throw ConfigError("beam width must be at least 1");

  struct Hypothesis {
    std::vector<TokenId> ids;
    double score = 0.0;
  };
  struct Candidate {
    double total;
    double step;
    std::size_t hyp;
    TokenId token;
  };
  struct Finished {
    std::vector<TokenId> ids;
    double normalized;
  };

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Finished> finished;
  for (std::size_t step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const auto lp = log_softmax(next(alive[h].ids));
      for (std::size_t t = 0; t < lp.size(); ++t)
        candidates.push_back(Candidate{alive[h].score + lp[t], lp[t], h, static_cast<TokenId>(t)});
    }
    const auto keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate &a, const Candidate &b) {
                        if (a.total != b.total) return a.total > b.total;
                        if (a.step != b.step) return a.step > b.step;
                        return std::tie(a.hyp, a.token) < std::tie(b.hyp, b.token);
                      });
    std::vector<Hypothesis> next_alive;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto &cand = candidates[c];
      const auto &parent = alive[cand.hyp];
      if (cand.token == kEosId) {
        finished.push_back(Finished{parent.ids, cand.total / static_cast<double>(parent.ids.size() + 1)});
      } else {
        Hypothesis h{parent.ids, cand.total};
        h.ids.push_back(cand.token);
        next_alive.push_back(std::move(h));
      }
    }
    alive = std::move(next_alive);
  }
  for (auto &h : alive) finished.push_back(Finished{h.ids, h.score / static_cast<double>(h.ids.size())});

  const auto best = std::max_element(finished.begin(), finished.end(), [](const Finished &a, const Finished &b) {
    return a.normalized < b.normalized;  // first maximum on ties
  });
  return best->ids;
}

std::vector<TokenId> decode_ids(const NextTokenScores &next, const DecodeOptions &options) {
  return options.strategy == DecodeStrategy::kGreedy ? greedy_decode(next, options.max_len)
                                                     : beam_decode(next, options.beam_width, options.max_len);
}

template <typename T>
NextTokenScores model_scorer(const TextModel<T> &model, const fusion::FusedDecoderInput<T> &context) {
  return [&model, &context](std::span<const TokenId> generated) {
    if (generated.size() + 1 > model.config().max_target_len) {
      throw DimensionError("generation exceeds the decoder's " + std::to_string(model.config().max_target_len) +
                           " positions");
    }
    numerics::NoGradScope<T> no_grad;
    std::vector<TokenId> input{kPadId};
    input.insert(input.end(), generated.begin(), generated.end());
    const auto logits = model.decode(context, input);
    const auto v = logits.cols();
    const auto row = logits.values().subspan((input.size() - 1) * v, v);
    return std::vector<double>(row.begin(), row.end());
  };
}

template <typename T>
std::string generate(const TextModel<T> &model, const Vocabulary &vocab, const fusion::FusedDecoderInput<T> &context,
                     const DecodeOptions &options) {
  DecodeOptions bounded = options;
  bounded.max_len = std::min(options.max_len, model.config().max_target_len);
  const auto ids = decode_ids(model_scorer(model, context), bounded);
  return vocab.decode(ids);
}

template NextTokenScores model_scorer(const TextModel<float> &, const fusion::FusedDecoderInput<float> &);
template NextTokenScores model_scorer(const TextModel<double> &, const fusion::FusedDecoderInput<double> &);
template std::string generate(const TextModel<float> &, const Vocabulary &, const fusion::FusedDecoderInput<float> &,
                              const DecodeOptions &);
template std::string generate(const TextModel<double> &, const Vocabulary &,
                              const fusion::FusedDecoderInput<double> &, const DecodeOptions &);

}  // namespace grapht5::text_model
