#pragma once

#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "helmnet/fft.hpp"
#include "helmnet/field.hpp"
#include "helmnet/neural/autodiff.hpp"

namespace helmnet {

template <typename Scalar>
using Kernel3 = Eigen::Matrix<std::complex<Scalar>, 3, 3, Eigen::RowMajor>;

inline constexpr double kGreenEpsilon = 1e-5;

/// [0 -1 0; -1 4 -1; 0 -1 0] + i * delta.
template <typename Scalar>
Kernel3<Scalar> laplacian_plus_identity_kernel() {
  using C = std::complex<Scalar>;
  Kernel3<Scalar> k = Kernel3<Scalar>::Zero();
  k(0, 1) = k(1, 0) = k(1, 2) = k(2, 1) = C(-1);
  k(1, 1) = C(4, 1);
  return k;
}

template <typename Scalar>
Kernel3<Scalar> delta_kernel() {
  Kernel3<Scalar> k = Kernel3<Scalar>::Zero();
  k(1, 1) = 1;
  return k;
}

/// Circulant embedding: K's center lands on (0, 0), neighbors wrap around.
template <typename Scalar>
ComplexGrid<Scalar> pad_kernel_corners(const Kernel3<Scalar>& k, Index h, Index w);

/// Periodic convolution with K on x's own grid: the circulant operator whose
/// first column is pad_kernel_corners(K).
template <typename Scalar>
ComplexGrid<Scalar> circular_conv(const Kernel3<Scalar>& k, const ComplexGrid<Scalar>& x);

/// Spatial Green's function of K sampled on 2h x 2w, with the source at
/// (h, w). Built by regularized division on a 6h x 6w zero-padded grid.
template <typename Scalar>
ComplexGrid<Scalar> green_function(const Kernel3<Scalar>& k, Index h, Index w,
                                   double eps = kGreenEpsilon);

/// FFT of green_function: the multiplier used by implicit_apply.
template <typename Scalar>
ComplexGrid<Scalar> green_spectrum(const Kernel3<Scalar>& k, Index h, Index w,
                                   double eps = kGreenEpsilon);

/// Reverse-mode derivative of green_spectrum: given dL/dRe + i dL/dIm of the
/// spectrum, returns the same for each of the nine kernel weights.
template <typename Scalar>
Kernel3<Scalar> green_spectrum_vjp(const Kernel3<Scalar>& k, Index h, Index w,
                                   const ComplexGrid<Scalar>& grad_spectrum,
                                   double eps = kGreenEpsilon);

/// Applies the Green's function with spectrum `spec` (2h x 2w) to an h x w map:
/// zero-pad, multiply in Fourier space, crop.
template <typename Scalar>
ComplexGrid<Scalar> implicit_apply(const ComplexGrid<Scalar>& x, const ComplexGrid<Scalar>& spec);

/// Per-channel trainable 3x3 complex kernels with a spectrum cache. Weights are
/// stored as a real (C, 2, 3, 3) tensor: [c][0] real part, [c][1] imaginary.
template <typename Scalar>
class ImplicitKernel {
 public:
  using Spectra = std::vector<ComplexGrid<Scalar>>;

  static nn::Tensor<Scalar> initial_weights(Index channels);
  static Kernel3<Scalar> kernel(const nn::Tensor<Scalar>& weights, Index c);

  /// Spectra for the given weights at coarse size h x w. Recomputed whenever the
  /// weights or the size differ from the cached ones.
  const Spectra& spectra(const nn::Tensor<Scalar>& weights, Index h, Index w) const;

  void invalidate() const;

 private:
  mutable std::mutex mutex_;
  mutable nn::Tensor<Scalar> cached_weights_;
  mutable Index cached_h_ = -1, cached_w_ = -1;
  mutable Spectra cached_;
};

namespace nn {

/// Implicit layer on real feature maps: channels (2i, 2i+1) form complex
/// channel i, which is filtered by the Green's function of kernel i.
/// x: (N, 2C, h, w); weights: (C, 2, 3, 3).
template <typename Scalar>
Var<Scalar> implicit_layer(Var<Scalar> x, Var<Scalar> weights, const ImplicitKernel<Scalar>& cache);

}  // namespace nn

}  // namespace helmnet
