#pragma once

#include <complex>
#include <string>

#include <Eigen/Core>

#include "helmnet/errors.hpp"

namespace helmnet {

using Index = Eigen::Index;

template <typename Scalar>
using RealGrid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ComplexGrid =
    Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

/// A complex function sampled on a uniform ny x nx grid. Values are stored
/// row-major in a flat vector so Krylov code can treat a field as a vector
/// without copies.
template <typename Scalar>
class ComplexField {
 public:
  using Complex = std::complex<Scalar>;
  using GridMap = Eigen::Map<ComplexGrid<Scalar>>;
  using ConstGridMap = Eigen::Map<const ComplexGrid<Scalar>>;

  ComplexField() = default;
  ComplexField(Index ny, Index nx, Scalar h)
      : values_(ComplexVector<Scalar>::Zero(ny * nx)), ny_(ny), nx_(nx), h_(h) {}
  ComplexField(ComplexVector<Scalar> values, Index ny, Index nx, Scalar h)
      : values_(std::move(values)), ny_(ny), nx_(nx), h_(h) {
    if (values_.size() != ny * nx) {
      throw DimensionError("ComplexField: value count " + std::to_string(values_.size()) +
                           " does not match " + std::to_string(ny) + "x" + std::to_string(nx));
    }
  }

  static ComplexField Zero(Index ny, Index nx, Scalar h) { return ComplexField(ny, nx, h); }
  static ComplexField ZeroLike(const ComplexField& other) {
    return ComplexField(other.ny_, other.nx_, other.h_);
  }

  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index size() const { return values_.size(); }
  Scalar h() const { return h_; }

  ComplexVector<Scalar>& values() { return values_; }
  const ComplexVector<Scalar>& values() const { return values_; }

  GridMap grid() { return GridMap(values_.data(), ny_, nx_); }
  ConstGridMap grid() const { return ConstGridMap(values_.data(), ny_, nx_); }

  Complex& operator()(Index y, Index x) { return values_[y * nx_ + x]; }
  const Complex& operator()(Index y, Index x) const { return values_[y * nx_ + x]; }

  bool same_grid(const ComplexField& other) const {
    return nx_ == other.nx_ && ny_ == other.ny_;
  }
  bool all_finite() const { return values_.allFinite(); }

 private:
  ComplexVector<Scalar> values_;
  Index ny_ = 0;
  Index nx_ = 0;
  Scalar h_ = Scalar(1);
};

/// (alpha, beta) of the mass term -omega^2 kappa^2 (alpha - (beta + gamma) i).
template <typename Scalar>
struct HelmholtzShift {
  Scalar alpha = Scalar(1);
  Scalar beta = Scalar(0);

  static HelmholtzShift Original() { return {Scalar(1), Scalar(0)}; }
  static HelmholtzShift Shifted() { return {Scalar(1), Scalar(0.5)}; }
};

/// Squared slowness, attenuation and frequency of one Helmholtz instance.
template <typename Scalar>
struct SlownessModel {
  RealGrid<Scalar> kappa_sq;
  RealGrid<Scalar> gamma;
  Scalar omega = Scalar(0);
  Scalar h = Scalar(1);
  /// Distance from the outermost nodes to the zero Dirichlet wall; 0 means h.
  /// Coarse levels keep the finest level's wall so all levels see one domain.
  Scalar wall = Scalar(0);

  Scalar wall_distance() const { return wall > Scalar(0) ? wall : h; }
  Index nx() const { return kappa_sq.cols(); }
  Index ny() const { return kappa_sq.rows(); }

  template <typename Other>
  bool same_grid(const ComplexField<Other>& f) const {
    return f.nx() == nx() && f.ny() == ny();
  }
};

}  // namespace helmnet
