#include "stereoagg/parameters.hpp"

#include <cmath>

namespace stereoagg {

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::insert(const std::string& name, Tensor<Scalar> t) {
  if (tensors_.count(name)) throw ContractViolation("duplicate parameter " + name);
  t.set_requires_grad(true);
  return tensors_.emplace(name, std::move(t)).first->second;
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::add_kernel(const std::string& name, const Shape& shape, Rng& rng) {
  Index fan_in = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  ArrayX<Scalar> v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(stddev * rng.normal());
  return insert(name, Tensor<Scalar>(shape, std::move(v)));
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::add_zeros(const std::string& name, const Shape& shape) {
  return insert(name, Tensor<Scalar>::zeros(shape));
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::add_constant(const std::string& name, const Shape& shape, Scalar value) {
  return insert(name, Tensor<Scalar>::constant(shape, value));
}

template <typename Scalar>
void ParameterSet<Scalar>::add_norm(const std::string& name, Index channels) {
  add_constant(name + ".gamma", {channels}, Scalar(1));
  add_zeros(name + ".beta", {channels});
  norms_.emplace(name, BatchNormState<Scalar>{});
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

template <typename Scalar>
const Tensor<Scalar>& ParameterSet<Scalar>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

template <typename Scalar>
BatchNormState<Scalar>& ParameterSet<Scalar>::norm(const std::string& name) {
  auto it = norms_.find(name);
  if (it == norms_.end()) throw ConfigError("missing batch-norm state " + name);
  return it->second;
}

template <typename Scalar>
const BatchNormState<Scalar>& ParameterSet<Scalar>::norm(const std::string& name) const {
  auto it = norms_.find(name);
  if (it == norms_.end()) throw ConfigError("missing batch-norm state " + name);
  return it->second;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

template <typename Scalar>
Index ParameterSet<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace stereoagg
