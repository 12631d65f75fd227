#pragma once

#include <utility>

#include "helmnet/multigrid.hpp"
#include "helmnet/neural/network.hpp"

namespace helmnet {

inline constexpr int kWarmupIterations = 3;

/// FGMRES on the original operator of `model`, preconditioned by one V-cycle
/// of `hier` (zero initial guess inside the cycle).
std::pair<ComplexField<double>, SolveReport> solve_vcycle(const SlownessModel<double>& model,
                                                          const GridHierarchy<double>& hier,
                                                          const ComplexField<double>& b,
                                                          const ComplexField<double>& x0,
                                                          const FgmresOptions& opt);

/// Warm-up FGMRES iterations with the V-cycle alone, then FGMRES restarted from
/// that iterate with M(r) = v_cycle(r, u0 = net(r)). Iterations, history and
/// the stopping test cover both phases relative to the initial residual.
std::pair<ComplexField<double>, SolveReport> solve_with_learned_preconditioner(
    const SlownessModel<double>& model, const GridHierarchy<double>& hier, const ComplexField<double>& b,
    const nn::HelmNet<float>& net, const nn::Encodings<float>& enc, const FgmresOptions& opt,
    int warmup = kWarmupIterations);

}  // namespace helmnet
