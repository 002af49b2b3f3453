#pragma once

#include <array>
#include <vector>

#include "stereoagg/tensor.hpp"

namespace stereoagg {

using Triple = std::array<Index, 3>;

// ---------------------------------------------------------------------------
// Elementwise and broadcasting arithmetic. Broadcasting aligns trailing axes;
// a missing leading axis or an axis of extent 1 stretches.

Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset);
template <typename Scalar> Tensor<Scalar> neg(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& x);
// Subgradient 0 at 0.
template <typename Scalar> Tensor<Scalar> abs(const Tensor<Scalar>& x);

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x, Index axis);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);

// Numerically stable softmax along one axis.
template <typename Scalar> Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis);

template <typename Scalar>
struct MaxResult {
  Tensor<Scalar> values;
  std::vector<Index> indices;  // winning position along the reduced axis
};

// Ties go to the lowest index; gradient flows only to the winner.
template <typename Scalar> MaxResult<Scalar> max_reduce(const Tensor<Scalar>& x, Index axis);

// ---------------------------------------------------------------------------
// Layout

template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);
// out[..., i, ...] = x[..., (i - shift) mod n, ...]
template <typename Scalar> Tensor<Scalar> roll(const Tensor<Scalar>& x, Index axis, Index shift);
template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis);
// New leading axis.
template <typename Scalar> Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& parts);
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index start, Index length);

// ---------------------------------------------------------------------------
// Convolutions. All are cross-correlations with symmetric zero padding of
// k/2 per axis, so a stride-1 output keeps the input extents and a stride-s
// output has ceil(n/s) positions.

// input [H,W,Cin], kernel [kh,kw,Cin,Cout] -> [ceil(H/s), ceil(W/s), Cout]
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Index stride = 1);

// input [D,H,W,Cin], kernel [kd,kh,kw,Cin,Cout]
template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      Triple stride = {1, 1, 1});

// Adjoint of conv3d. input [D,H,W,Cin], kernel [kd,kh,kw,Cin,Cout];
// output_shape is [D',H',W',Cout] with each spatial extent = stride * input.
template <typename Scalar>
Tensor<Scalar> conv3d_transpose(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                Triple stride, const Shape& output_shape);

// ---------------------------------------------------------------------------
// Batch normalization over the trailing (channel) axis.

enum class Mode { train, eval };

template <typename Scalar>
struct BatchNormState {
  ArrayX<Scalar> running_mean;
  ArrayX<Scalar> running_var;
  bool initialized = false;
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Train mode normalizes with the statistics of this input and folds them
// into the running state (the first update copies them). Eval mode uses the
// running state and throws ConfigError if it was never initialized.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Mode mode, BatchNormState<Scalar>& state);

}  // namespace stereoagg
