#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "grapht5/numerics/tensor.hpp"

namespace grapht5::numerics {

template <typename T>
struct Parameter {
  std::string name;  // dotted path, unique within a model
  Tensor<T> tensor;
};

enum class Init {
  kUniformFanIn,  // U(-1/sqrt(fan_in), +1/sqrt(fan_in))
  kZeros,
  kOnes,
};

// Owns every trainable tensor of a model in creation order. Creation order is
// also the order the seeded initialiser consumes random numbers, so two stores
// built by the same code with the same seed are bit-identical.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> create(const std::string &name, Shape shape, Init init, std::size_t fan_in = 0);

  const std::vector<Parameter<T>> &parameters() const { return params_; }
  std::vector<Parameter<T>> &parameters() { return params_; }
  const Parameter<T> *find(const std::string &name) const;
  Parameter<T> *find(const std::string &name);

  std::size_t scalar_count() const;
  void zero_grad();
  // Sets every parameter value to zero (used by tests of bias-free paths).
  void fill_zero();

 private:
  std::mt19937_64 rng_;
  std::vector<Parameter<T>> params_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace grapht5::numerics
