#include "grapht5/numerics/parameter.hpp"

#include <algorithm>
#include <cmath>

#include "grapht5/error.hpp"

namespace grapht5::numerics {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string &name, Shape shape, Init init,
                                    std::size_t fan_in) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  const std::size_t n = element_count(shape);
  std::vector<T> values(n, T(0));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::kUniformFanIn: {
      if (fan_in == 0) throw ConfigError("parameter '" + name + "' needs a positive fan-in");
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto &v : values) v = static_cast<T>(dist(rng_));
      break;
    }
  }
  Tensor<T> tensor(std::move(shape), std::move(values), true);
  params_.push_back(Parameter<T>{name, tensor});
  return tensor;
}

template <typename T>
const Parameter<T> *ParameterStore<T>::find(const std::string &name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const auto &p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

template <typename T>
Parameter<T> *ParameterStore<T>::find(const std::string &name) {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const auto &p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto &p : params_) p.tensor.zero_grad();
}

template <typename T>
void ParameterStore<T>::fill_zero() {
  for (auto &p : params_) {
    auto v = p.tensor.mutable_values();
    std::fill(v.begin(), v.end(), T(0));
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace grapht5::numerics
