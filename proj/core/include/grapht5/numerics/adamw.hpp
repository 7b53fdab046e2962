#pragma once

#include <vector>

#include "grapht5/numerics/parameter.hpp"

namespace grapht5::numerics {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moment estimation with decoupled weight decay. Moments live in
// double regardless of the parameter precision.
template <typename T>
class AdamW {
 public:
  AdamW(ParameterStore<T> &store, AdamWOptions options);

  // Applies one update from the current gradients scaled by grad_scale.
  // Parameters without a gradient still receive weight decay.
  void step(double grad_scale = 1.0);

  long steps() const { return steps_; }
  const AdamWOptions &options() const { return options_; }

 private:
  ParameterStore<T> &store_;
  AdamWOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long steps_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace grapht5::numerics
