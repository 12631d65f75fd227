#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "helmnet/field.hpp"

namespace helmnet {

/// Ten points per wavelength: omega * kappa * h <= 2 pi / 10.
inline constexpr double kMaxWavenumberTimesSpacing = 0.628;

/// Default ABL width: 16 nodes at 128 intervals, proportional otherwise.
inline Index default_abl_width(Index n) {
  return std::max<Index>(1, static_cast<Index>(std::lround(16.0 * double(n - 1) / 128.0)));
}

/// Attenuation profile gamma0 in the interior rising quadratically to 1 on the
/// boundary nodes over `layer_width` nodes.
template <typename Scalar = double>
RealGrid<Scalar> build_abl(Index nx, Index ny, Index layer_width, Scalar gamma0) {
  if (layer_width < 1 || 2 * layer_width >= std::min(nx, ny)) {
    throw DimensionError("build_abl: layer width " + std::to_string(layer_width) +
                         " does not fit a " + std::to_string(ny) + "x" + std::to_string(nx) +
                         " grid");
  }
  if (!(gamma0 >= Scalar(0) && gamma0 <= Scalar(0.1))) {
    throw ConfigError("build_abl: gamma0 must lie in [0, 0.1]");
  }
  RealGrid<Scalar> gamma(ny, nx);
  const Scalar width = Scalar(layer_width);
  for (Index y = 0; y < ny; ++y) {
    for (Index x = 0; x < nx; ++x) {
      const Index d = std::min({x, nx - 1 - x, y, ny - 1 - y});
      if (d < layer_width) {
        const Scalar t = (width - Scalar(d)) / width;
        gamma(y, x) = gamma0 + (Scalar(1) - gamma0) * t * t;
      } else {
        gamma(y, x) = gamma0;
      }
    }
  }
  return gamma;
}

/// omega such that omega * kappa_max * h equals the ten-points-per-wavelength
/// bound on an n-node unit grid.
inline double wavenumber_for_grid(Index n, double kappa_max) {
  if (n < 2) throw DimensionError("wavenumber_for_grid: need at least 2 nodes");
  if (!(kappa_max > 0.0)) throw ConfigError("wavenumber_for_grid: kappa_max must be positive");
  const double h = 1.0 / double(n - 1);
  return kMaxWavenumberTimesSpacing / (kappa_max * h);
}

/// Assemble a model on the unit square (h = 1/(n-1) with n the longest side)
/// from squared slowness, with the default ABL and the 10-ppw frequency.
template <typename Scalar = double>
SlownessModel<Scalar> make_model(RealGrid<Scalar> kappa_sq, Scalar gamma0,
                                 Index layer_width = -1) {
  const Index n = std::max(kappa_sq.rows(), kappa_sq.cols());
  SlownessModel<Scalar> m;
  m.h = Scalar(1) / Scalar(n - 1);
  if (layer_width < 0) layer_width = default_abl_width(n);
  m.gamma = build_abl<Scalar>(kappa_sq.cols(), kappa_sq.rows(), layer_width, gamma0);
  const Scalar kappa_max = std::sqrt(kappa_sq.maxCoeff());
  m.omega = Scalar(wavenumber_for_grid(n, double(kappa_max)));
  m.kappa_sq = std::move(kappa_sq);
  return m;
}

/// Complex mass coefficient per node: -omega^2 kappa^2 (alpha - (beta + gamma) i).
template <typename Scalar>
ComplexGrid<Scalar> mass_term(const SlownessModel<Scalar>& m, const HelmholtzShift<Scalar>& s) {
  using C = std::complex<Scalar>;
  const Scalar w2 = m.omega * m.omega;
  ComplexGrid<Scalar> out(m.ny(), m.nx());
  for (Index i = 0; i < out.size(); ++i) {
    const Scalar k2 = m.kappa_sq.data()[i];
    out.data()[i] = -w2 * k2 * C(s.alpha, -(s.beta + m.gamma.data()[i]));
  }
  return out;
}

/// Second-difference coefficients along one axis of n nodes with spacing h and
/// a zero wall at distance `wall` beyond both end nodes. With wall == h this is
/// the plain (-1, 2, -1) / h^2 stencil with zero padding; otherwise the end
/// rows use the non-uniform three-point formula.
template <typename Scalar>
struct AxisStencil {
  std::vector<Scalar> diag, lower, upper;

  AxisStencil() = default;
  AxisStencil(Index n, Scalar h, Scalar wall) : diag(std::size_t(n)), lower(std::size_t(n)), upper(std::size_t(n)) {
    for (Index i = 0; i < n; ++i) {
      const Scalar dl = i == 0 ? wall : h;
      const Scalar dr = i == n - 1 ? wall : h;
      const Scalar s = Scalar(2) / (dl + dr);
      lower[std::size_t(i)] = s / dl;
      upper[std::size_t(i)] = s / dr;
      diag[std::size_t(i)] = s / dl + s / dr;
    }
  }
};

/// Stencil diagonal (4/h^2 away from the boundary) plus the mass term.
template <typename Scalar>
ComplexGrid<Scalar> helmholtz_diagonal(const SlownessModel<Scalar>& m,
                                       const HelmholtzShift<Scalar>& s) {
  const AxisStencil<Scalar> ax(m.nx(), m.h, m.wall_distance()), ay(m.ny(), m.h, m.wall_distance());
  ComplexGrid<Scalar> d = mass_term(m, s);
  for (Index y = 0; y < m.ny(); ++y)
    for (Index x = 0; x < m.nx(); ++x) d(y, x) += ax.diag[std::size_t(x)] + ay.diag[std::size_t(y)];
  return d;
}

/// out = A u with the five-point Laplacian, zero padding outside the grid and
/// the precomputed per-node mass coefficient.
template <typename Scalar>
void apply_stencil(const ComplexField<Scalar>& u, const ComplexGrid<Scalar>& mass, const AxisStencil<Scalar>& ax,
                   const AxisStencil<Scalar>& ay, ComplexField<Scalar>& out) {
  using C = std::complex<Scalar>;
  const Index ny = u.ny();
  const Index nx = u.nx();
  if (mass.rows() != ny || mass.cols() != nx || Index(ax.diag.size()) != nx || Index(ay.diag.size()) != ny) {
    throw DimensionError("apply_helmholtz: model grid does not match field grid");
  }
  if (!out.same_grid(u)) out = ComplexField<Scalar>::ZeroLike(u);
  const C* in = u.values().data();
  C* res = out.values().data();
  const C* mdat = mass.data();
  for (Index y = 0; y < ny; ++y) {
    const C* row = in + y * nx;
    const C* up = y > 0 ? row - nx : nullptr;
    const C* down = y + 1 < ny ? row + nx : nullptr;
    const Scalar dy = ay.diag[std::size_t(y)], ly = ay.lower[std::size_t(y)], uy = ay.upper[std::size_t(y)];
    C* o = res + y * nx;
    const C* mrow = mdat + y * nx;
    if (nx >= 3) {
      // Interior columns share one coefficient set.
      const Scalar dx = ax.diag[1], lx = ax.lower[1], ux = ax.upper[1];
      for (Index x = 1; x + 1 < nx; ++x) {
        C acc = (dx + dy) * row[x] - lx * row[x - 1] - ux * row[x + 1] + mrow[x] * row[x];
        if (up) acc -= ly * up[x];
        if (down) acc -= uy * down[x];
        o[x] = acc;
      }
    }
    auto edge = [&](Index x) {
      C acc = (ax.diag[std::size_t(x)] + dy) * row[x] + mrow[x] * row[x];
      if (x > 0) acc -= ax.lower[std::size_t(x)] * row[x - 1];
      if (x + 1 < nx) acc -= ax.upper[std::size_t(x)] * row[x + 1];
      if (up) acc -= ly * up[x];
      if (down) acc -= uy * down[x];
      o[x] = acc;
    };
    edge(0);
    if (nx > 1) edge(nx - 1);
  }
}

template <typename Scalar>
ComplexField<Scalar> apply_helmholtz(const ComplexField<Scalar>& u, const SlownessModel<Scalar>& m,
                                     const HelmholtzShift<Scalar>& shift) {
  if (!m.same_grid(u)) {
    throw DimensionError("apply_helmholtz: model grid does not match field grid");
  }
  ComplexField<Scalar> out = ComplexField<Scalar>::ZeroLike(u);
  apply_stencil(u, mass_term(m, shift), AxisStencil<Scalar>(m.nx(), m.h, m.wall_distance()),
                AxisStencil<Scalar>(m.ny(), m.h, m.wall_distance()), out);
  return out;
}

/// Matrix-free operator with the mass coefficient cached, for repeated use
/// inside solvers.
template <typename Scalar>
class HelmholtzOperator {
 public:
  HelmholtzOperator() = default;
  HelmholtzOperator(const SlownessModel<Scalar>& m, const HelmholtzShift<Scalar>& shift)
      : mass_(mass_term(m, shift)),
        ax_(m.nx(), m.h, m.wall_distance()),
        ay_(m.ny(), m.h, m.wall_distance()),
        diag_(helmholtz_diagonal(m, shift)),
        h_(m.h),
        ny_(m.ny()),
        nx_(m.nx()) {}

  void apply(const ComplexField<Scalar>& u, ComplexField<Scalar>& out) const {
    apply_stencil(u, mass_, ax_, ay_, out);
  }
  ComplexField<Scalar> operator()(const ComplexField<Scalar>& u) const {
    ComplexField<Scalar> out = ComplexField<Scalar>::ZeroLike(u);
    apply(u, out);
    return out;
  }

  /// Stencil diagonal.
  const ComplexGrid<Scalar>& diagonal() const { return diag_; }

  Scalar h() const { return h_; }
  Index ny() const { return ny_; }
  Index nx() const { return nx_; }

 private:
  ComplexGrid<Scalar> mass_;
  AxisStencil<Scalar> ax_, ay_;
  ComplexGrid<Scalar> diag_;
  Scalar h_ = Scalar(1);
  Index ny_ = 0;
  Index nx_ = 0;
};

}  // namespace helmnet
