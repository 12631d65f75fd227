#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "helmnet/learned_solver.hpp"

namespace helmnet::bench {

using nlohmann::json;

inline constexpr double kTestGamma0 = 0.01;

/// Field file: text header ("helmnet-field 1", nx, ny, h, dtype complex128,
/// "end") followed by little-endian complex128 values, row-major.
void write_field(const std::string& path, const ComplexField<double>& f);
ComplexField<double> read_field(const std::string& path);

enum class PreconditionerKind { VCycle, ExplicitNet, ImplicitNet };
std::string to_string(PreconditionerKind k);
PreconditionerKind parse_preconditioner(const std::string& s);

/// Slowness source: an image path (.pgm/.f64), "blobs:<seed>" or
/// "layered:<seed>". Prepared at `size` intervals with the given attenuation.
SlownessModel<double> make_test_model(const std::string& source, Index size, double gamma0 = kTestGamma0);

struct BenchSpec {
  std::vector<Index> sizes{128};
  std::vector<PreconditionerKind> preconditioners{PreconditionerKind::VCycle};
  std::map<PreconditionerKind, std::string> checkpoints;
  std::string model_source = "blobs:9001";
  Index num_rhs = 20;
  double tol = 1e-7;
  Index max_iter = 250;
  Index restart = 10;
  double gamma0 = kTestGamma0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  Index size = 0;
  std::string preconditioner;
  double mean_iters = 0.0;
  double converged_fraction = 0.0;
};

/// Standard complex normal right-hand side j of a benchmark.
ComplexField<double> random_rhs(Index ny, Index nx, double h, std::uint64_t seed, Index j);
/// Unit point source at the center node.
ComplexField<double> point_source(Index ny, Index nx, double h);

/// Networks by preconditioner kind; loaded from spec.checkpoints when absent.
using NetworkSet = std::map<PreconditionerKind, std::shared_ptr<const nn::HelmNet<float>>>;

std::vector<BenchRow> run_bench(const BenchSpec& spec, NetworkSet nets = {});
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);
std::string bench_csv(const std::vector<BenchRow>& rows);

/// Solve one problem with the chosen preconditioner.
std::pair<ComplexField<double>, SolveReport> solve_problem(const SlownessModel<double>& model,
                                                           const ComplexField<double>& rhs,
                                                           PreconditionerKind kind,
                                                           const nn::HelmNet<float>* net,
                                                           const FgmresOptions& opt);

json report_json(const SolveReport& rep, const json& config);
void write_history_csv(const std::string& path, const SolveReport& rep);

/// Minimal JSON-schema check (type, required, properties, items, minimum,
/// maximum, enum). Returns an empty string when valid, else the first problem.
std::string validate_json(const json& schema, const json& doc);

}  // namespace helmnet::bench
