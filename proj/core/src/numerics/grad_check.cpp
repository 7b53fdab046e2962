#include "grapht5/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "grapht5/error.hpp"

namespace grapht5::numerics {

namespace {

template <typename T>
double probe(const std::function<Tensor<T>()> &f) {
  NoGradScope<T> no_grad;
  const double value = static_cast<double>(f().item());
  if (!std::isfinite(value)) throw EvaluationError("grad_check: non-finite function value at probe");
  return value;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()> &f, std::vector<Parameter<T>> params,
                           double h, double tol) {
  for (auto &p : params) p.tensor.zero_grad();
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    const Tensor<T> loss = f();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw EvaluationError("grad_check: non-finite function value");
    }
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = tol;
  for (auto &p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.elements = p.tensor.size();
    auto values = p.tensor.mutable_values();
    std::vector<T> grad(p.tensor.size(), T(0));
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), grad.begin());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = static_cast<T>(static_cast<double>(saved) + h);
      const double plus = probe(f);
      values[i] = static_cast<T>(static_cast<double>(saved) - h);
      const double minus = probe(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double exact = static_cast<double>(grad[i]);
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-3});
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_index = i;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

template GradCheckReport grad_check<float>(const std::function<Tensor<float>()> &,
                                           std::vector<Parameter<float>>, double, double);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()> &,
                                            std::vector<Parameter<double>>, double, double);

}  // namespace grapht5::numerics
