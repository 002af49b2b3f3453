#pragma once

#include <map>
#include <string>

#include "stereoagg/parameters.hpp"

namespace stereoagg {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;

  void validate() const;
};

// Plain RMSProp without momentum:
//   v <- decay * v + (1 - decay) * g^2
//   p <- p - lr * g / (sqrt(v) + eps)
template <typename Scalar>
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig config = {}) : config_(config) { config_.validate(); }

  // Updates every parameter with requires_grad set. Throws
  // ContractViolation if such a parameter has no gradient.
  void step(ParameterSet<Scalar>& params);

  const RmsPropConfig& config() const { return config_; }
  std::map<std::string, ArrayX<Scalar>>& accumulators() { return accumulators_; }
  const std::map<std::string, ArrayX<Scalar>>& accumulators() const { return accumulators_; }

 private:
  RmsPropConfig config_;
  std::map<std::string, ArrayX<Scalar>> accumulators_;
};

extern template class RmsProp<float>;
extern template class RmsProp<double>;

}  // namespace stereoagg
