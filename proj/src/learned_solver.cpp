#include "helmnet/learned_solver.hpp"

#include <chrono>

namespace helmnet {

namespace {

using Field = ComplexField<double>;
using FieldMap = std::function<Field(const Field&)>;

}  // namespace

std::pair<Field, SolveReport> solve_vcycle(const SlownessModel<double>& model,
                                           const GridHierarchy<double>& hier, const Field& b,
                                           const Field& x0, const FgmresOptions& opt) {
  const HelmholtzOperator<double> A(model, HelmholtzShift<double>::Original());
  const FieldMap apply_A = [&](const Field& u) { return A(u); };
  const FieldMap apply_M = [&](const Field& r) { return v_cycle(r, hier); };
  return fgmres<double>(apply_A, apply_M, b, x0, opt);
}

std::pair<Field, SolveReport> solve_with_learned_preconditioner(
    const SlownessModel<double>& model, const GridHierarchy<double>& hier, const Field& b,
    const nn::HelmNet<float>& net, const nn::Encodings<float>& enc, const FgmresOptions& opt,
    int warmup) {
  const auto t0 = std::chrono::steady_clock::now();
  const HelmholtzOperator<double> A(model, HelmholtzShift<double>::Original());
  const FieldMap apply_A = [&](const Field& u) { return A(u); };
  const FieldMap vcycle_only = [&](const Field& r) { return v_cycle(r, hier); };
  const FieldMap net_vcycle = [&](const Field& r) { return v_cycle(r, net.predict(r, enc), hier); };

  FgmresOptions first = opt;
  first.reference_norm = b.values().norm();
  first.max_iter = std::min<Index>(warmup, opt.max_iter);
  auto [x, rep] = fgmres<double>(apply_A, vcycle_only, b, Field::ZeroLike(b), first);
  rep.warmup_iterations = rep.iterations;
  if (!rep.converged && rep.iterations < opt.max_iter) {
    FgmresOptions second = first;
    second.max_iter = opt.max_iter - rep.iterations;
    auto [x2, rep2] = fgmres<double>(apply_A, net_vcycle, b, x, second);
    x = std::move(x2);
    rep.iterations += rep2.iterations;
    rep.relative_residual_history.insert(rep.relative_residual_history.end(),
                                         rep2.relative_residual_history.begin() + 1,
                                         rep2.relative_residual_history.end());
    rep.converged = rep2.converged;
    rep.final_true_residual = rep2.final_true_residual;
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(x), std::move(rep)};
}

}  // namespace helmnet
