#include "helmnet/fft.hpp"

#include <vector>

#include <unsupported/Eigen/FFT>

namespace helmnet {

namespace {

template <typename Scalar>
void transform(ComplexGrid<Scalar>& a, bool inverse) {
  using C = std::complex<Scalar>;
  thread_local Eigen::FFT<Scalar> engine;
  const Index ny = a.rows(), nx = a.cols();
  std::vector<C> in, out;

  in.resize(std::size_t(nx));
  for (Index y = 0; y < ny; ++y) {
    for (Index x = 0; x < nx; ++x) in[std::size_t(x)] = a(y, x);
    inverse ? engine.inv(out, in) : engine.fwd(out, in);
    for (Index x = 0; x < nx; ++x) a(y, x) = out[std::size_t(x)];
  }
  in.resize(std::size_t(ny));
  for (Index x = 0; x < nx; ++x) {
    for (Index y = 0; y < ny; ++y) in[std::size_t(y)] = a(y, x);
    inverse ? engine.inv(out, in) : engine.fwd(out, in);
    for (Index y = 0; y < ny; ++y) a(y, x) = out[std::size_t(y)];
  }
}

}  // namespace

template <typename Scalar>
void fft2_inplace(ComplexGrid<Scalar>& a) {
  transform(a, false);
}

template <typename Scalar>
void ifft2_inplace(ComplexGrid<Scalar>& a) {
  transform(a, true);
}

template void fft2_inplace<float>(ComplexGrid<float>&);
template void fft2_inplace<double>(ComplexGrid<double>&);
template void ifft2_inplace<float>(ComplexGrid<float>&);
template void ifft2_inplace<double>(ComplexGrid<double>&);

}  // namespace helmnet
