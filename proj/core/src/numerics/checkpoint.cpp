#include "grapht5/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "grapht5/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host-order values and assumes little-endian");

namespace grapht5::numerics {

namespace {

constexpr char kMagic[8] = {'G', 'T', '5', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream &os, U value) {
  os.write(reinterpret_cast<const char *>(&value), sizeof(U));
}

template <typename U>
U get(std::istream &is, const std::filesystem::path &path) {
  U value{};
  if (!is.read(reinterpret_cast<char *>(&value), sizeof(U))) {
    throw FormatError("checkpoint " + path.string() + " is truncated");
  }
  return value;
}

std::string encode_header(const CheckpointHeader &header) {
  std::string out;
  for (const auto &[key, value] : header) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint header entry '" + key + "' contains a reserved character");
    }
    out += key + "=" + value + "\n";
  }
  return out;
}

CheckpointHeader decode_header(const std::string &text) {
  CheckpointHeader header;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint header line '" + line + "'");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return header;
}

}  // namespace

const CheckpointTensor *Checkpoint::find(const std::string &name) const {
  for (const auto &t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path &path, const CheckpointHeader &header,
                     const ParameterStore<T> &store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::string head = encode_header(header);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(head.size()));
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(sizeof(T)));
  put<std::uint64_t>(os, store.parameters().size());
  for (const auto &p : store.parameters()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (const auto d : p.tensor.shape()) put<std::uint64_t>(os, d);
    const auto values = p.tensor.values();
    os.write(reinterpret_cast<const char *>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(T)));
  }
  if (!os) throw IoError("failed while writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a grapht5 checkpoint");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const auto head_bytes = get<std::uint32_t>(is, path);
  std::string head(head_bytes, '\0');
  if (!is.read(head.data(), head_bytes)) throw FormatError("checkpoint " + path.string() + " is truncated");
  ckpt.header = decode_header(head);
  ckpt.scalar_bytes = get<std::uint32_t>(is, path);
  if (ckpt.scalar_bytes != 4 && ckpt.scalar_bytes != 8) {
    throw FormatError("checkpoint scalar width " + std::to_string(ckpt.scalar_bytes) + " is invalid");
  }
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const auto name_bytes = get<std::uint32_t>(is, path);
    t.name.resize(name_bytes);
    if (!is.read(t.name.data(), name_bytes)) throw FormatError("checkpoint " + path.string() + " is truncated");
    const auto rank = get<std::uint32_t>(is, path);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(is, path));
    const auto n = element_count(t.shape);
    auto read_values = [&](auto &vec) {
      vec.resize(n);
      const auto bytes = static_cast<std::streamsize>(n * sizeof(vec[0]));
      if (!is.read(reinterpret_cast<char *>(vec.data()), bytes)) {
        throw FormatError("checkpoint " + path.string() + " is truncated");
      }
    };
    if (ckpt.scalar_bytes == 4) {
      std::vector<float> v;
      read_values(v);
      t.values = std::move(v);
    } else {
      std::vector<double> v;
      read_values(v);
      t.values = std::move(v);
    }
    if (ckpt.find(t.name) != nullptr) throw FormatError("checkpoint repeats parameter '" + t.name + "'");
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
void load_parameters(const Checkpoint &checkpoint, ParameterStore<T> &store) {
  if (checkpoint.tensors.size() != store.parameters().size()) {
    throw VersionError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                       " parameters, model expects " + std::to_string(store.parameters().size()));
  }
  for (auto &p : store.parameters()) {
    const auto *t = checkpoint.find(p.name);
    if (t == nullptr) throw VersionError("checkpoint is missing parameter '" + p.name + "'");
    if (t->shape != p.tensor.shape()) {
      throw VersionError("parameter '" + p.name + "' has shape " + shape_string(t->shape) +
                         " in the checkpoint but " + shape_string(p.tensor.shape()) + " in the model");
    }
    auto dst = p.tensor.mutable_values();
    std::visit(
        [&](const auto &src) {
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
        },
        t->values);
  }
}

template void save_checkpoint<float>(const std::filesystem::path &, const CheckpointHeader &,
                                     const ParameterStore<float> &);
template void save_checkpoint<double>(const std::filesystem::path &, const CheckpointHeader &,
                                      const ParameterStore<double> &);
template void load_parameters<float>(const Checkpoint &, ParameterStore<float> &);
template void load_parameters<double>(const Checkpoint &, ParameterStore<double> &);

}  // namespace grapht5::numerics
