#pragma once

#include <functional>
#include <string>
#include <vector>

#include "grapht5/numerics/parameter.hpp"
#include "grapht5/numerics/tensor.hpp"

namespace grapht5::numerics {

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares the tape gradient of a scalar function against central differences
// (f(θ+h) - f(θ-h)) / 2h for every element of every listed parameter.
//
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3);
// the floor keeps gradients that are zero up to rounding from reporting
// spurious large ratios.
//
// The function is evaluated once under a fresh tape and 2·(element count)
// times without gradient tracking. Throws EvaluationError when f is not
// finite at a probe point.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()> &f, std::vector<Parameter<T>> params,
                           double h = 1e-5, double tol = 1e-4);

extern template GradCheckReport grad_check<float>(const std::function<Tensor<float>()> &,
                                                  std::vector<Parameter<float>>, double, double);
extern template GradCheckReport grad_check<double>(const std::function<Tensor<double>()> &,
                                                   std::vector<Parameter<double>>, double, double);

}  // namespace grapht5::numerics
