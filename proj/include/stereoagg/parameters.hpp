#pragma once

#include <map>
#include <string>

#include "stereoagg/ops.hpp"
#include "stereoagg/random.hpp"

namespace stereoagg {

// Named trainable tensors plus batch-norm running statistics. Names are
// kept sorted so iteration order (and thus checkpoints) is deterministic.
template <typename Scalar>
class ParameterSet {
 public:
  using TensorMap = std::map<std::string, Tensor<Scalar>>;
  using NormMap = std::map<std::string, BatchNormState<Scalar>>;

  // He fan-in initialization: N(0, 2 / fan_in), fan_in = all extents but the last.
  Tensor<Scalar>& add_kernel(const std::string& name, const Shape& shape, Rng& rng);
  Tensor<Scalar>& add_zeros(const std::string& name, const Shape& shape);
  Tensor<Scalar>& add_constant(const std::string& name, const Shape& shape, Scalar value);
  // gamma (ones), beta (zeros) and an uninitialized running state.
  void add_norm(const std::string& name, Index channels);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor<Scalar>& at(const std::string& name);
  const Tensor<Scalar>& at(const std::string& name) const;
  BatchNormState<Scalar>& norm(const std::string& name);
  const BatchNormState<Scalar>& norm(const std::string& name) const;

  TensorMap& tensors() { return tensors_; }
  const TensorMap& tensors() const { return tensors_; }
  NormMap& norms() { return norms_; }
  const NormMap& norms() const { return norms_; }

  void zero_grad();
  Index parameter_count() const;

  // Deep copy into another precision; gradients and tape links are dropped.
  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& [name, t] : tensors_) {
      out.tensors().emplace(name, Tensor<Other>(t.shape(), t.values().template cast<Other>()))
          .first->second.set_requires_grad(t.requires_grad());
    }
    for (const auto& [name, s] : norms_) {
      BatchNormState<Other> c;
      c.running_mean = s.running_mean.template cast<Other>();
      c.running_var = s.running_var.template cast<Other>();
      c.initialized = s.initialized;
      out.norms().emplace(name, std::move(c));
    }
    return out;
  }

 private:
  Tensor<Scalar>& insert(const std::string& name, Tensor<Scalar> t);

  TensorMap tensors_;
  NormMap norms_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace stereoagg
