#include "grapht5/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "grapht5/error.hpp"

namespace grapht5::numerics {

std::size_t element_count(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  if (element_count(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(element_count(shape)) + " elements but " +
                         std::to_string(data.size()) + " values were supplied");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values,
                            bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::vector<T>(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::vector<T> values,
                            bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
  return impl_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
  return impl_->shape[1];
}

template <typename T>
T Tensor<T>::operator()(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw DimensionError("item() needs a single element, got shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
void Tape<T>::record(const Tensor<T> &output, BackwardFn backward) {
  entries_.push_back(Entry{output.impl(), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T> &loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  const auto found = std::find_if(entries_.rbegin(), entries_.rend(),
                                  [&](const Entry &e) { return e.output == loss.impl(); });
  if (found == entries_.rend()) {
    throw ContractError("backward() called on a tensor that is not on the tape");
  }
  auto &seed = loss.impl()->grad;
  seed.assign(1, T(1));
  for (auto it = found; it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

namespace {

template <typename T>
Tape<T> *&active_tape_slot() {
  thread_local Tape<T> *slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T> *active_tape() {
  return active_tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T> &tape) : previous_(active_tape_slot<T>()) {
  active_tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_tape_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(active_tape_slot<T>()) {
  active_tape_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  active_tape_slot<T>() = previous_;
}

template <typename T>
void backward(const Tensor<T> &loss) {
  auto *tape = active_tape<T>();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
  tape->clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;
template Tape<float> *active_tape<float>();
template Tape<double> *active_tape<double>();
template void backward<float>(const Tensor<float> &);
template void backward<double>(const Tensor<double> &);

}  // namespace grapht5::numerics
