#pragma once

#include "helmnet/field.hpp"

namespace helmnet {

/// Unnormalized forward 2-D DFT along both axes, in place.
template <typename Scalar>
void fft2_inplace(ComplexGrid<Scalar>& a);

/// Inverse 2-D DFT including the 1/(rows*cols) factor, in place.
template <typename Scalar>
void ifft2_inplace(ComplexGrid<Scalar>& a);

template <typename Scalar>
ComplexGrid<Scalar> fft2(ComplexGrid<Scalar> a) {
  fft2_inplace(a);
  return a;
}

template <typename Scalar>
ComplexGrid<Scalar> ifft2(ComplexGrid<Scalar> a) {
  ifft2_inplace(a);
  return a;
}

}  // namespace helmnet
