#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "grapht5/numerics/parameter.hpp"

namespace grapht5::numerics {

// Binary checkpoint container, little-endian:
//
//   "GT5CKPT\0"            8-byte magic
//   u32 version            currently 1
//   u32 header_bytes       followed by `key=value\n` lines (model configuration)
//   u32 scalar_bytes       4 (float32) or 8 (float64)
//   u64 parameter_count
//   per parameter:
//     u32 name_bytes, name
//     u32 rank, u64 dims[rank]
//     raw values (scalar_bytes each)
//
// Values are written verbatim, so save/load is bit-exact at the stored width.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using CheckpointHeader = std::map<std::string, std::string>;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> values;
};

struct Checkpoint {
  CheckpointHeader header;
  std::uint32_t scalar_bytes = 8;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor *find(const std::string &name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path &path, const CheckpointHeader &header,
                     const ParameterStore<T> &store);

Checkpoint read_checkpoint(const std::filesystem::path &path);

// Copies checkpoint values into a store with the same parameter names and
// shapes; converts between widths when the model precision differs.
template <typename T>
void load_parameters(const Checkpoint &checkpoint, ParameterStore<T> &store);

extern template void save_checkpoint<float>(const std::filesystem::path &, const CheckpointHeader &,
                                            const ParameterStore<float> &);
extern template void save_checkpoint<double>(const std::filesystem::path &, const CheckpointHeader &,
                                             const ParameterStore<double> &);
extern template void load_parameters<float>(const Checkpoint &, ParameterStore<float> &);
extern template void load_parameters<double>(const Checkpoint &, ParameterStore<double> &);

}  // namespace grapht5::numerics
