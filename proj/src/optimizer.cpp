#include "stereoagg/optimizer.hpp"

namespace stereoagg {

void RmsPropConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate: must be >= 0");
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("train.rmsprop_decay: must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.rmsprop_epsilon: must be > 0");
}

template <typename Scalar>
void RmsProp<Scalar>::step(ParameterSet<Scalar>& params) {
  const auto lr = static_cast<Scalar>(config_.learning_rate);
  const auto rho = static_cast<Scalar>(config_.decay);
  const auto eps = static_cast<Scalar>(config_.epsilon);
  for (auto& [name, p] : params.tensors()) {
    if (!p.requires_grad()) continue;
    if (!p.has_grad()) throw ContractViolation("rmsprop_step: no gradient for parameter " + name);
    const ArrayX<Scalar>& g = p.node()->grad;
    auto [it, fresh] = accumulators_.try_emplace(name, ArrayX<Scalar>::Zero(p.numel()));
    ArrayX<Scalar>& v = it->second;
    if (v.size() != p.numel()) throw ContractViolation("rmsprop_step: accumulator shape mismatch for " + name);
    v = rho * v + (Scalar(1) - rho) * g.square();
    p.mutable_values() -= lr * g / (v.sqrt() + eps);
    if (!p.values().allFinite()) throw NumericFault("rmsprop_step(" + name + ")");
  }
}

template class RmsProp<float>;
template class RmsProp<double>;

}  // namespace stereoagg
