#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "helmnet/field.hpp"

namespace helmnet {

template <typename Scalar>
using LinearMap = std::function<void(const ComplexVector<Scalar>&, ComplexVector<Scalar>&)>;

struct SolveReport {
  Index iterations = 0;
  /// ||b - A x_k|| / ||b - A x_0||; entry 0 is 1.
  std::vector<double> relative_residual_history;
  bool converged = false;
  double wall_time = 0.0;
  /// Recomputed ||b - A x|| / ||b - A x_0|| for the returned iterate.
  double final_true_residual = 1.0;
  Index warmup_iterations = 0;
};

struct FgmresOptions {
  double tol = 1e-7;
  Index max_iter = 250;
  Index restart = 10;
  /// Norm that the history is relative to; <= 0 means ||b - A x0||.
  double reference_norm = -1.0;
};

/// Restarted flexible GMRES with right preconditioning. The preconditioner may
/// change from call to call (or be nonlinear); each preconditioned direction is
/// stored explicitly.
template <typename Scalar>
std::pair<ComplexVector<Scalar>, SolveReport> fgmres(const LinearMap<Scalar>& apply_A,
                                                      const LinearMap<Scalar>& apply_M,
                                                      const ComplexVector<Scalar>& b,
                                                      const ComplexVector<Scalar>& x0,
                                                      const FgmresOptions& opt) {
  using C = std::complex<Scalar>;
  using Vec = ComplexVector<Scalar>;
  using Mat = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;

  if (!(opt.tol >= 0.0)) throw SolverError("fgmres: tolerance must be non-negative");
  if (opt.max_iter < 0 || opt.restart < 1) throw SolverError("fgmres: invalid iteration limits");
  if (b.size() != x0.size()) throw DimensionError("fgmres: b and x0 sizes differ");

  const auto t0 = std::chrono::steady_clock::now();
  const Index n = b.size();
  Vec x = x0;
  Vec r(n);
  Vec w(n);
  SolveReport rep;

  auto residual = [&](const Vec& xx, Vec& rr) {
    apply_A(xx, rr);
    rr = b - rr;
  };
  residual(x, r);
  const double r0 = double(r.norm());
  const double ref = opt.reference_norm > 0.0 ? opt.reference_norm : r0;
  auto finish = [&](double true_rel) {
    rep.final_true_residual = true_rel;
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::make_pair(std::move(x), std::move(rep));
  };

  rep.relative_residual_history.push_back(ref > 0.0 ? r0 / ref : 0.0);
  if (r0 == 0.0 || r0 / ref <= opt.tol) {
    rep.converged = true;
    return finish(ref > 0.0 ? r0 / ref : 0.0);
  }

  const Index m = opt.restart;
  std::vector<Vec> V(m + 1, Vec(n));
  std::vector<Vec> Z(m, Vec(n));
  Mat H = Mat::Zero(m + 1, m);
  std::vector<C> cs(m), sn(m);
  Vec g(m + 1);

  double beta = r0;
  while (rep.iterations < opt.max_iter) {
    V[0] = r / Scalar(beta);
    g.setZero();
    g[0] = C(Scalar(beta));
    H.setZero();
    Index j = 0;
    bool stop = false;
    for (; j < m && rep.iterations < opt.max_iter; ++j) {
      apply_M(V[j], Z[j]);
      apply_A(Z[j], w);
      const Scalar w0 = w.norm();
      for (Index i = 0; i <= j; ++i) {
        H(i, j) = V[i].dot(w);  // conjugates V[i]
        w -= H(i, j) * V[i];
      }
      const Scalar hn = w.norm();
      if (!std::isfinite(double(hn)) || !Z[j].allFinite()) {
        throw NumericalError("fgmres: non-finite Krylov vector at iteration " +
                             std::to_string(rep.iterations + 1));
      }
      H(j + 1, j) = C(hn);
      for (Index i = 0; i < j; ++i) {
        const C a = H(i, j);
        const C bb = H(i + 1, j);
        H(i, j) = std::conj(cs[i]) * a + std::conj(sn[i]) * bb;
        H(i + 1, j) = -sn[i] * a + cs[i] * bb;
      }
      const C a = H(j, j);
      const Scalar bnorm = hn;
      const Scalar denom = std::sqrt(std::norm(a) + bnorm * bnorm);
      if (denom == Scalar(0)) {
        throw SolverError("fgmres: singular Hessenberg column at iteration " +
                          std::to_string(rep.iterations + 1));
      }
      cs[j] = a / denom;
      sn[j] = C(bnorm / denom);
      H(j, j) = C(denom);
      H(j + 1, j) = C(0);
      g[j + 1] = -sn[j] * g[j];
      g[j] = std::conj(cs[j]) * g[j];
      ++rep.iterations;
      const double res = double(std::abs(g[j + 1]));
      rep.relative_residual_history.push_back(res / ref);
      if (res / ref <= opt.tol) {
        stop = true;
        ++j;
        break;
      }
      if (hn <= Scalar(1e-13) * w0) {
        if (res / ref <= 1e-10) {
          // Lucky breakdown: the Krylov space contains the solution.
          stop = true;
          ++j;
          break;
        }
        throw SolverError("fgmres: Arnoldi breakdown with residual " + std::to_string(res / ref) +
                          " at iteration " + std::to_string(rep.iterations));
      }
      V[j + 1] = w / hn;
    }
    // Solve the triangular least-squares system and update x.
    const Index k = j;
    Vec y = H.topLeftCorner(k, k).template triangularView<Eigen::Upper>().solve(g.head(k));
    for (Index i = 0; i < k; ++i) x += y[i] * Z[i];
    residual(x, r);
    beta = double(r.norm());
    if (!std::isfinite(beta)) throw NumericalError("fgmres: non-finite residual after restart");
    if (stop) {
      rep.converged = true;
      break;
    }
    if (beta / ref <= opt.tol) {
      rep.converged = true;
      break;
    }
  }
  return finish(beta / ref);
}

/// Field-level convenience wrapper.
template <typename Scalar>
std::pair<ComplexField<Scalar>, SolveReport> fgmres(
    const std::function<ComplexField<Scalar>(const ComplexField<Scalar>&)>& apply_A,
    const std::function<ComplexField<Scalar>(const ComplexField<Scalar>&)>& apply_M,
    const ComplexField<Scalar>& b, const ComplexField<Scalar>& x0, const FgmresOptions& opt) {
  if (!b.same_grid(x0)) throw DimensionError("fgmres: b and x0 grids differ");
  const Index ny = b.ny(), nx = b.nx();
  const Scalar h = b.h();
  auto wrap = [&](const std::function<ComplexField<Scalar>(const ComplexField<Scalar>&)>& f) {
    return LinearMap<Scalar>([&, f](const ComplexVector<Scalar>& in, ComplexVector<Scalar>& out) {
      out = f(ComplexField<Scalar>(in, ny, nx, h)).values();
    });
  };
  auto [x, rep] = fgmres<Scalar>(wrap(apply_A), wrap(apply_M), b.values(), x0.values(), opt);
  return {ComplexField<Scalar>(std::move(x), ny, nx, h), std::move(rep)};
}

}  // namespace helmnet
