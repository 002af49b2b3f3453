#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stereoagg/errors.hpp"

namespace stereoagg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename Scalar>
struct TensorNode {
  Shape shape;
  ArrayX<Scalar> value;
  ArrayX<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;

  bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }

  void accumulate(const ArrayX<Scalar>& g) {
    if (grad.size() != value.size()) grad = ArrayX<Scalar>::Zero(value.size());
    grad += g;
  }
};

}  // namespace detail

// Dense row-major N-d array with reverse-mode gradient support.
//
// Tensor is a handle: copies share storage, which lets the tape refer to
// inputs and outputs of recorded ops. Values are never mutated by ops;
// optimizers update leaf parameters through mutable_values().
template <typename Scalar>
class Tensor {
 public:
  using Array = ArrayX<Scalar>;
  using Node = detail::TensorNode<Scalar>;

  Tensor() : Tensor(Shape{}, Array::Zero(1)) {}
  explicit Tensor(Shape shape) : Tensor(shape, Array::Zero(shape_numel(shape))) {}
  Tensor(Shape shape, Array values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar value) {
    const Index n = shape_numel(shape);
    return Tensor(std::move(shape), Array::Constant(n, value));
  }
  static Tensor scalar(Scalar value) { return constant(Shape{}, value); }
  static Tensor from(Shape shape, std::initializer_list<Scalar> values);

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Array& values() const { return node_->value; }
  Scalar operator[](Index flat) const { return node_->value[flat]; }
  Scalar item() const;

  Array& mutable_values() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return node_->has_grad(); }
  // Zero-filled when no gradient reached this tensor.
  Array grad() const;
  void zero_grad() { node_->grad.resize(0); }

  // Fresh leaf holding a copy of the values.
  Tensor detach() const { return Tensor(shape(), values()); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape(), values().template cast<Other>());
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of executed differentiable ops. One tape per thread and
// scalar type; it must not be shared across threads.
template <typename Scalar>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::function<void()> backward;
  };

  static Tape& active();

  void record(std::string op, std::function<void()> backward) {
    entries_.push_back({std::move(op), std::move(backward)});
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  // Runs every recorded backward closure in reverse execution order, then
  // clears the tape. The visitor, if given, sees each op name as it runs.
  void run_backward(const std::function<void(std::string_view)>& visit = {});

 private:
  std::vector<Entry> entries_;
};

// Recording is disabled while a guard is alive on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Seeds d(loss)/d(loss) = 1 and propagates through the active tape.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace stereoagg
