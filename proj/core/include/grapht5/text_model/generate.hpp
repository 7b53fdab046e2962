#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grapht5/text_model/transformer.hpp"

namespace grapht5::text_model {

enum class DecodeStrategy { kGreedy, kBeam };

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  std::size_t beam_width = 4;
  std::size_t max_len = 128;
};

// Scores for the token following `generated` (which excludes the decoder
// start token). Must return one value per vocabulary entry.
using NextTokenScores = std::function<std::vector<double>(std::span<const TokenId> generated)>;

// Log-softmax of raw scores, max-subtracted.
std::vector<double> log_softmax(std::span<const double> scores);

// Argmax each step, lowest index on ties, until </s> or max_len tokens.
// The returned ids exclude </s>.
std::vector<TokenId> greedy_decode(const NextTokenScores &next, std::size_t max_len);

// Width-k search over summed log-probabilities; finished hypotheses are
// ranked by score / length (length counts the </s> token). Candidates are
// ordered by total score, then step score, then hypothesis, then token index,
// so width 1 reproduces greedy_decode exactly.
std::vector<TokenId> beam_decode(const NextTokenScores &next, std::size_t width, std::size_t max_len);

std::vector<TokenId> decode_ids(const NextTokenScores &next, const DecodeOptions &options);

// Adapts a text model and a fixed context into a NextTokenScores callback.
template <typename T>
NextTokenScores model_scorer(const TextModel<T> &model, const fusion::FusedDecoderInput<T> &context);

template <typename T>
std::string generate(const TextModel<T> &model, const Vocabulary &vocab, const fusion::FusedDecoderInput<T> &context,
                     const DecodeOptions &options);

}  // namespace grapht5::text_model
