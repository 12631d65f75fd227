#pragma once

#include <string>
#include <vector>

#include "helmnet/helmholtz.hpp"
#include "helmnet/krylov.hpp"

namespace helmnet {

/// Vertex-centered coarsening: n fine nodes (odd) -> (n + 1) / 2 coarse nodes,
/// coarse node i coincides with fine node 2i.
inline Index coarse_size(Index n) {
  if (n < 3 || n % 2 == 0) {
    throw DimensionError("multigrid: grid of " + std::to_string(n) +
                         " nodes has no stride-2 coarse grid (need odd n >= 3)");
  }
  return (n + 1) / 2;
}

namespace detail {
inline constexpr double kRestrict1d[3] = {0.25, 0.5, 0.25};
inline constexpr double kProlong1d[3] = {0.5, 1.0, 0.5};
}  // namespace detail

/// 1/16 [1 2 1; 2 4 2; 1 2 1] at stride 2, zero outside the grid.
template <typename Scalar>
ComplexField<Scalar> restrict_full_weighting(const ComplexField<Scalar>& fine) {
  const Index cny = coarse_size(fine.ny());
  const Index cnx = coarse_size(fine.nx());
  ComplexField<Scalar> coarse(cny, cnx, Scalar(2) * fine.h());
  for (Index I = 0; I < cny; ++I) {
    for (Index J = 0; J < cnx; ++J) {
      std::complex<Scalar> acc(0);
      for (int a = -1; a <= 1; ++a) {
        const Index y = 2 * I + a;
        if (y < 0 || y >= fine.ny()) continue;
        for (int b = -1; b <= 1; ++b) {
          const Index x = 2 * J + b;
          if (x < 0 || x >= fine.nx()) continue;
          acc += Scalar(detail::kRestrict1d[a + 1] * detail::kRestrict1d[b + 1]) * fine(y, x);
        }
      }
      coarse(I, J) = acc;
    }
  }
  return coarse;
}

/// Stride-2 transposed 1/4 [1 2 1; 2 4 2; 1 2 1], i.e. bilinear interpolation
/// onto the (2n - 1)-node fine grid.
template <typename Scalar>
ComplexField<Scalar> prolong_bilinear(const ComplexField<Scalar>& coarse, Index fine_ny,
                                      Index fine_nx) {
  if (fine_ny != 2 * coarse.ny() - 1 || fine_nx != 2 * coarse.nx() - 1) {
    throw DimensionError("prolong_bilinear: fine grid " + std::to_string(fine_ny) + "x" +
                         std::to_string(fine_nx) + " inconsistent with coarse " +
                         std::to_string(coarse.ny()) + "x" + std::to_string(coarse.nx()));
  }
  ComplexField<Scalar> fine(fine_ny, fine_nx, coarse.h() / Scalar(2));
  for (Index I = 0; I < coarse.ny(); ++I) {
    for (Index J = 0; J < coarse.nx(); ++J) {
      const std::complex<Scalar> c = coarse(I, J);
      for (int a = -1; a <= 1; ++a) {
        const Index y = 2 * I + a;
        if (y < 0 || y >= fine_ny) continue;
        for (int b = -1; b <= 1; ++b) {
          const Index x = 2 * J + b;
          if (x < 0 || x >= fine_nx) continue;
          fine(y, x) += Scalar(detail::kProlong1d[a + 1] * detail::kProlong1d[b + 1]) * c;
        }
      }
    }
  }
  return fine;
}

template <typename Scalar>
ComplexField<Scalar> prolong_bilinear(const ComplexField<Scalar>& coarse) {
  return prolong_bilinear(coarse, 2 * coarse.ny() - 1, 2 * coarse.nx() - 1);
}

/// Full weighting for media coefficients, renormalized by the in-grid weight so
/// constants survive at the boundary.
template <typename Scalar>
RealGrid<Scalar> restrict_media(const RealGrid<Scalar>& fine) {
  const Index cny = coarse_size(fine.rows());
  const Index cnx = coarse_size(fine.cols());
  RealGrid<Scalar> coarse(cny, cnx);
  for (Index I = 0; I < cny; ++I) {
    for (Index J = 0; J < cnx; ++J) {
      Scalar acc(0), wsum(0);
      for (int a = -1; a <= 1; ++a) {
        const Index y = 2 * I + a;
        if (y < 0 || y >= fine.rows()) continue;
        for (int b = -1; b <= 1; ++b) {
          const Index x = 2 * J + b;
          if (x < 0 || x >= fine.cols()) continue;
          const Scalar wt = Scalar(detail::kRestrict1d[a + 1] * detail::kRestrict1d[b + 1]);
          acc += wt * fine(y, x);
          wsum += wt;
        }
      }
      coarse(I, J) = acc / wsum;
    }
  }
  return coarse;
}

/// Rediscretized coarse model: media restricted, H = 2h, same omega and the
/// same Dirichlet wall as the fine level.
template <typename Scalar>
SlownessModel<Scalar> coarsen_model(const SlownessModel<Scalar>& fine) {
  SlownessModel<Scalar> c;
  c.kappa_sq = restrict_media(fine.kappa_sq);
  c.gamma = restrict_media(fine.gamma);
  c.omega = fine.omega;
  c.h = Scalar(2) * fine.h;
  c.wall = fine.wall_distance();
  return c;
}

struct MultigridOptions {
  int num_levels = 3;
  int relax_pre = 1;
  int relax_post = 1;
  double jacobi_damping = 0.8;
  int coarse_iters = 10;
};

/// One level of the hierarchy: the (shifted) operator and its inverse diagonal.
template <typename Scalar>
struct GridLevel {
  SlownessModel<Scalar> model;
  HelmholtzOperator<Scalar> op;
  ComplexGrid<Scalar> inv_diag;
};

template <typename Scalar>
GridLevel<Scalar> make_level(SlownessModel<Scalar> model, const HelmholtzShift<Scalar>& shift) {
  GridLevel<Scalar> lvl;
  lvl.op = HelmholtzOperator<Scalar>(model, shift);
  lvl.inv_diag = lvl.op.diagonal();
  if ((lvl.inv_diag.abs() == Scalar(0)).any()) {
    throw SolverError("multigrid: zero diagonal entry in level operator");
  }
  lvl.inv_diag = lvl.inv_diag.inverse();
  lvl.model = std::move(model);
  return lvl;
}

/// Immutable per-level operators for the shifted-Laplacian V-cycle.
template <typename Scalar>
class GridHierarchy {
 public:
  GridHierarchy() = default;
  GridHierarchy(const SlownessModel<Scalar>& fine, const HelmholtzShift<Scalar>& shift,
                MultigridOptions opt = {})
      : opt_(opt), shift_(shift) {
    if (opt.num_levels < 1) throw ConfigError("GridHierarchy: need at least one level");
    SlownessModel<Scalar> m = fine;
    for (int l = 0; l < opt.num_levels; ++l) {
      if (l > 0) m = coarsen_model(m);
      levels_.push_back(make_level(m, shift));
    }
  }

  /// Hierarchy for the preconditioner: alpha = 1, beta = 0.5.
  static GridHierarchy ShiftedLaplacian(const SlownessModel<Scalar>& fine,
                                        MultigridOptions opt = {}) {
    return GridHierarchy(fine, HelmholtzShift<Scalar>::Shifted(), opt);
  }

  int num_levels() const { return int(levels_.size()); }
  const GridLevel<Scalar>& level(int l) const { return levels_.at(std::size_t(l)); }
  const MultigridOptions& options() const { return opt_; }
  const HelmholtzShift<Scalar>& shift() const { return shift_; }

 private:
  std::vector<GridLevel<Scalar>> levels_;
  MultigridOptions opt_;
  HelmholtzShift<Scalar> shift_;
};

/// u <- u + w D^{-1} (rhs - A u), `sweeps` times.
template <typename Scalar>
ComplexField<Scalar> jacobi_relax(ComplexField<Scalar> u, const ComplexField<Scalar>& rhs,
                                  const GridLevel<Scalar>& lvl, int sweeps, Scalar damping) {
  if (!u.same_grid(rhs) || u.ny() != lvl.op.ny() || u.nx() != lvl.op.nx()) {
    throw DimensionError("jacobi_relax: grid mismatch");
  }
  ComplexField<Scalar> au = ComplexField<Scalar>::ZeroLike(u);
  for (int s = 0; s < sweeps; ++s) {
    lvl.op.apply(u, au);
    u.grid() += damping * lvl.inv_diag * (rhs.grid() - au.grid());
  }
  return u;
}

/// Coarsest-level solve: fixed-count GMRES right-preconditioned by one damped
/// Jacobi sweep, zero initial guess.
template <typename Scalar>
ComplexField<Scalar> coarse_solve(const ComplexField<Scalar>& rhs, const GridLevel<Scalar>& lvl,
                                  int iterations, Scalar damping) {
  if (rhs.ny() != lvl.op.ny() || rhs.nx() != lvl.op.nx()) {
    throw DimensionError("coarse_solve: grid mismatch");
  }
  const Index ny = rhs.ny(), nx = rhs.nx();
  const Scalar h = rhs.h();
  if (rhs.values().squaredNorm() == Scalar(0) || iterations <= 0) {
    return ComplexField<Scalar>::ZeroLike(rhs);
  }
  ComplexField<Scalar> tmp_in(ny, nx, h), tmp_out(ny, nx, h);
  LinearMap<Scalar> A = [&](const ComplexVector<Scalar>& in, ComplexVector<Scalar>& out) {
    tmp_in.values() = in;
    lvl.op.apply(tmp_in, tmp_out);
    out = tmp_out.values();
  };
  const Eigen::Map<const Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>> dinv(
      lvl.inv_diag.data(), lvl.inv_diag.size());
  LinearMap<Scalar> M = [&](const ComplexVector<Scalar>& in, ComplexVector<Scalar>& out) {
    out = (damping * dinv * in.array()).matrix();
  };
  FgmresOptions opt;
  opt.tol = 0.0;
  opt.max_iter = iterations;
  opt.restart = iterations;
  auto [x, rep] = fgmres<Scalar>(A, M, rhs.values(), ComplexVector<Scalar>::Zero(rhs.size()), opt);
  return ComplexField<Scalar>(std::move(x), ny, nx, h);
}

namespace detail {
template <typename Scalar>
ComplexField<Scalar> v_cycle_level(const ComplexField<Scalar>& rhs, ComplexField<Scalar> u,
                                   const GridHierarchy<Scalar>& hier, int l) {
  const auto& opt = hier.options();
  const auto& lvl = hier.level(l);
  const Scalar w = Scalar(opt.jacobi_damping);
  if (l == hier.num_levels() - 1) {
    if (u.values().squaredNorm() == Scalar(0)) return coarse_solve(rhs, lvl, opt.coarse_iters, w);
    ComplexField<Scalar> r = rhs;
    r.values() -= lvl.op(u).values();
    u.values() += coarse_solve(r, lvl, opt.coarse_iters, w).values();
    return u;
  }
  u = jacobi_relax(std::move(u), rhs, lvl, opt.relax_pre, w);
  ComplexField<Scalar> r = rhs;
  r.values() -= lvl.op(u).values();
  const ComplexField<Scalar> rc = restrict_full_weighting(r);
  const ComplexField<Scalar> ec =
      v_cycle_level(rc, ComplexField<Scalar>::ZeroLike(rc), hier, l + 1);
  u.values() += prolong_bilinear(ec, u.ny(), u.nx()).values();
  return jacobi_relax(std::move(u), rhs, lvl, opt.relax_post, w);
}
}  // namespace detail

/// One V(pre, post) cycle on the hierarchy's operator from initial guess u0.
template <typename Scalar>
ComplexField<Scalar> v_cycle(const ComplexField<Scalar>& rhs, const ComplexField<Scalar>& u0,
                             const GridHierarchy<Scalar>& hier) {
  if (hier.num_levels() == 0) throw ConfigError("v_cycle: empty hierarchy");
  const auto& fine = hier.level(0);
  if (!rhs.same_grid(u0) || rhs.ny() != fine.op.ny() || rhs.nx() != fine.op.nx()) {
    throw DimensionError("v_cycle: rhs/u0 do not match the finest hierarchy level");
  }
  return detail::v_cycle_level(rhs, u0, hier, 0);
}

template <typename Scalar>
ComplexField<Scalar> v_cycle(const ComplexField<Scalar>& rhs, const GridHierarchy<Scalar>& hier) {
  return v_cycle(rhs, ComplexField<Scalar>::ZeroLike(rhs), hier);
}

}  // namespace helmnet
