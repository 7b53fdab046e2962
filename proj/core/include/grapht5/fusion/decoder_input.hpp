#pragma once

#include <cstddef>

#include "grapht5/numerics/ops.hpp"

namespace grapht5::fusion {

// Row ranges of the four context segments. An absent segment has length 0
// and its offset equals the end of the previous segment.
struct SegmentLayout {
  std::size_t prompt_offset = 0, prompt_length = 0;
  std::size_t pooled_offset = 0, pooled_length = 0;
  std::size_t graph_offset = 0, graph_length = 0;
  std::size_t smiles_offset = 0, smiles_length = 0;

  std::size_t total() const { return prompt_length + pooled_length + graph_length + smiles_length; }
};

// Decoder context [P, O_Gpool, O_G, S*] with its combined key mask.
template <typename T>
struct FusedDecoderInput {
  numerics::Tensor<T> values;
  numerics::Mask mask;
  SegmentLayout layout;

  std::size_t length() const { return mask.size(); }
};

}  // namespace grapht5::fusion
