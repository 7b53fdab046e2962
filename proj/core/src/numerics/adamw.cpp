#include "grapht5/numerics/adamw.hpp"

#include <cmath>

#include "grapht5/error.hpp"

namespace grapht5::numerics {

template <typename T>
AdamW<T>::AdamW(ParameterStore<T> &store, AdamWOptions options) : store_(store), options_(options) {
  if (options_.learning_rate < 0 || options_.weight_decay < 0 || options_.epsilon <= 0 ||
      options_.beta1 < 0 || options_.beta1 >= 1 || options_.beta2 < 0 || options_.beta2 >= 1) {
    throw ConfigError("invalid AdamW hyperparameters");
  }
  for (const auto &p : store_.parameters()) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double grad_scale) {
  ++steps_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto &params = store_.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].tensor.mutable_values();
    const bool has_grad = params[k].tensor.has_grad();
    const auto grad = params[k].tensor.grad();
    auto &m = m_[k];
    auto &v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      double theta = static_cast<double>(values[i]);
      theta -= lr * options_.weight_decay * theta;
      const double g = has_grad ? static_cast<double>(grad[i]) * grad_scale : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      theta -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + options_.epsilon);
      values[i] = static_cast<T>(theta);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace grapht5::numerics
