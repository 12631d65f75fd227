#pragma once

#include <Eigen/Core>

#include "helmnet/neural/autodiff.hpp"

namespace helmnet::nn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Square-kernel convolution geometry. Weights are (Cout, Cin, k, k) for a
/// plain convolution, (C, 1, k, k) for depthwise and (Cin, Cout, k, k) for a
/// transposed convolution.
struct ConvSpec {
  Index stride = 1;
  Index pad = 1;
  bool depthwise = false;
};

/// Output extent of a convolution along one axis.
inline Index conv_out_size(Index in, Index k, Index stride, Index pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Cross-correlation with zero padding. `bias` may be null.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, const Var<Scalar>* bias, ConvSpec spec);

/// Adjoint of conv2d with respect to its input, producing an out_h x out_w map.
template <typename Scalar>
Var<Scalar> conv_transpose2d(Var<Scalar> x, Var<Scalar> w, const Var<Scalar>* bias, ConvSpec spec,
                             Index out_h, Index out_w);

/// Running statistics owned by the network (not trainable).
template <typename Scalar>
struct BatchNormStats {
  Tensor<Scalar>* mean = nullptr;
  Tensor<Scalar>* var = nullptr;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization: batch statistics (and a running-stat update)
/// when training, running statistics otherwise.
template <typename Scalar>
Var<Scalar> batchnorm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormStats<Scalar> stats,
                      bool training);

/// log(1 + exp(x)), overflow-safe.
template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> x);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s);

/// Sample i of x becomes samples i*times .. i*times + times - 1.
template <typename Scalar>
Var<Scalar> repeat_batch(Var<Scalar> x, Index times);

/// 1-D factor-2 interpolation matrix (out x in). Up: odd targets (2n - 1) use
/// vertex-aligned linear interpolation, even targets (2n) half-pixel linear
/// interpolation. Down: the row-normalized transpose of the matching up
/// operator.
template <typename Scalar>
RowMatrix<Scalar> resample_matrix(Index in, Index out);

/// Fixed-weight factor-2 bilinear resampling to out_h x out_w.
template <typename Scalar>
Var<Scalar> bilinear_resample(Var<Scalar> x, Index out_h, Index out_w);

/// (1/N) sum over the batch of squared Euclidean distances.
template <typename Scalar>
Var<Scalar> mse_loss(Var<Scalar> pred, Var<Scalar> target);

}  // namespace helmnet::nn
