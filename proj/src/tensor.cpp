#include "stereoagg/tensor.hpp"

#include <sstream>

namespace stereoagg {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index extent : shape) {
    if (extent < 0) throw ContractViolation("negative extent in shape " + shape_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values) : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw ContractViolation("element count " + std::to_string(values.size()) +
                            " does not match shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(Shape shape, std::initializer_list<Scalar> values) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ContractViolation("axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
typename Tensor<Scalar>::Array Tensor<Scalar>::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Array::Zero(numel());
}

template <typename Scalar>
Tape<Scalar>& Tape<Scalar>::active() {
  thread_local Tape tape;
  return tape;
}

template <typename Scalar>
void Tape<Scalar>::run_backward(const std::function<void(std::string_view)>& visit) {
  // Closures may hold the last references to intermediate nodes; move the
  // entries out so the tape is empty even if a closure throws.
  std::vector<Entry> entries;
  entries.swap(entries_);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (visit) visit(it->op);
    it->backward();
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (loss.numel() != 1 || loss.rank() != 0) {
    throw ContractViolation("backward requires a scalar loss, got shape " +
                            shape_string(loss.shape()));
  }
  auto& tape = Tape<Scalar>::active();
  if (tape.empty()) throw ContractViolation("backward called with an empty tape");
  loss.node()->accumulate(ArrayX<Scalar>::Ones(1));
  tape.run_backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace stereoagg
