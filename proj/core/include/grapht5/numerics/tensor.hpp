#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace grapht5::numerics {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape &shape);
std::string shape_string(const Shape &shape);

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  // Empty until the first gradient is accumulated into this tensor.
  std::vector<T> grad;
  bool requires_grad = false;
};

// Reference-counted dense row-major array. Copies share storage; use clone()
// for a deep copy. Rank 0 is a scalar, rank 2 is the common matrix case.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values,
                       bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape &shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  // Matrix accessors; throw DimensionError when the rank is not 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const { return impl_->data; }
  // Writes through this span bypass the tape (initialisation, optimizer steps).
  std::span<T> mutable_values() { return impl_->data; }

  T operator()(std::size_t r, std::size_t c) const;
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  // Allocates a zero gradient on first access.
  std::span<T> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const { return clone(); }

  const std::shared_ptr<TensorImpl<T>> &impl() const { return impl_; }
  bool same_storage(const Tensor &other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Ordered record of differentiable operations. backward() replays the record
// in exact reverse execution order; gradients are summed into each input.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<T> &output_grad)>;

  struct Entry {
    std::shared_ptr<TensorImpl<T>> output;
    BackwardFn backward;
  };

  void record(const Tensor<T> &output, BackwardFn backward);

  // Seeds d loss / d loss = 1 and propagates to every reachable tensor.
  void backward(const Tensor<T> &loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

// Tape that differentiable ops record into on the calling thread, or null when
// gradients are not being tracked.
template <typename T>
Tape<T> *active_tape();

template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T> &tape);
  ~TapeScope();
  TapeScope(const TapeScope &) = delete;
  TapeScope &operator=(const TapeScope &) = delete;

 private:
  Tape<T> *previous_;
};

template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope &) = delete;
  NoGradScope &operator=(const NoGradScope &) = delete;

 private:
  Tape<T> *previous_;
};

// Convenience: backward through the active tape, then clear it.
template <typename T>
void backward(const Tensor<T> &loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace grapht5::numerics
