#include "helmnet/bench.hpp"

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "helmnet/datagen.hpp"
#include "helmnet/neural/checkpoint.hpp"

namespace helmnet::bench {

void write_field(const std::string& path, const ComplexField<double>& f) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("write_field: cannot open " + path);
  out << std::setprecision(17);
  out << "helmnet-field 1\nnx " << f.nx() << "\nny " << f.ny() << "\nh " << f.h() << "\ndtype complex128\nend\n";
  out.write(reinterpret_cast<const char*>(f.values().data()), std::streamsize(f.size() * 16));
  if (!out) throw ConfigError("write_field: write failed for " + path);
}

ComplexField<double> read_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("read_field: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "helmnet-field 1") throw IngestionError("read_field: " + path + " is not a field file");
  Index nx = -1, ny = -1;
  double h = 0;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key == "nx") nx = std::stol(value);
    else if (key == "ny") ny = std::stol(value);
    else if (key == "h") h = std::stod(value);
    else if (key == "dtype" && value != "complex128") throw IngestionError("read_field: unsupported dtype " + value);
  }
  if (line != "end" || nx <= 0 || ny <= 0 || !(h > 0)) throw IngestionError("read_field: bad header in " + path);
  ComplexField<double> f(ny, nx, h);
  in.read(reinterpret_cast<char*>(f.values().data()), std::streamsize(f.size() * 16));
  if (!in) throw IngestionError("read_field: truncated data in " + path);
  return f;
}

std::string to_string(PreconditionerKind k) {
  switch (k) {
    case PreconditionerKind::VCycle: return "v_cycle";
    case PreconditionerKind::ExplicitNet: return "explicit_net";
    case PreconditionerKind::ImplicitNet: return "implicit_net";
  }
  return "?";
}

PreconditionerKind parse_preconditioner(const std::string& s) {
  if (s == "v_cycle") return PreconditionerKind::VCycle;
  if (s == "explicit_net") return PreconditionerKind::ExplicitNet;
  if (s == "implicit_net") return PreconditionerKind::ImplicitNet;
  throw ConfigError("unknown preconditioner '" + s + "' (expected v_cycle, explicit_net or implicit_net)");
}

SlownessModel<double> make_test_model(const std::string& source, Index size, double gamma0) {
  data::CorpusOptions opt;
  opt.gamma0 = gamma0;
  const auto colon = source.find(':');
  const std::string kind = colon == std::string::npos ? "" : source.substr(0, colon);
  if (kind == "blobs" || kind == "layered") {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(source.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("model source '" + source + "' needs an integer seed");
    }
    if (kind == "blobs") {
      std::mt19937_64 rng(seed);
      return data::prepare_model(data::random_blobs(128, rng), size, opt);
    }
    return data::prepare_model(data::layered_medium(256, seed), size, opt);
  }
  const bool pgm = source.size() > 4 && source.substr(source.size() - 4) == ".pgm";
  return data::prepare_model(pgm ? data::read_pgm(source) : data::read_f64(source), size, opt);
}

void BenchSpec::validate() const {
  if (sizes.empty() || preconditioners.empty()) throw ConfigError("bench: need sizes and preconditioners");
  if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("bench: tol must lie in (0, 1)");
  if (num_rhs < 1) throw ConfigError("bench: num_rhs must be at least 1");
  if (max_iter < 1 || restart < 1) throw ConfigError("bench: max_iter and restart must be positive");
}

ComplexField<double> random_rhs(Index ny, Index nx, double h, std::uint64_t seed, Index j) {
  std::mt19937_64 rng(data::mix_seed(seed, std::uint64_t(j)));
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  ComplexField<double> b(ny, nx, h);
  for (Index i = 0; i < b.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    b.values()[i] = {re, im};
  }
  return b;
}

ComplexField<double> point_source(Index ny, Index nx, double h) {
  ComplexField<double> b(ny, nx, h);
  b(ny / 2, nx / 2) = 1.0;
  return b;
}

std::pair<ComplexField<double>, SolveReport> solve_problem(const SlownessModel<double>& model,
                                                           const ComplexField<double>& rhs, PreconditionerKind kind,
                                                           const nn::HelmNet<float>* net, const FgmresOptions& opt) {
  const auto hier = GridHierarchy<double>::ShiftedLaplacian(model);
  if (kind == PreconditionerKind::VCycle) {
    return solve_vcycle(model, hier, rhs, ComplexField<double>::ZeroLike(rhs), opt);
  }
  if (!net) throw ConfigError("solve: preconditioner " + to_string(kind) + " needs a checkpoint");
  return solve_with_learned_preconditioner(model, hier, rhs, *net, net->encode(model), opt);
}

std::vector<BenchRow> run_bench(const BenchSpec& spec, NetworkSet nets) {
  spec.validate();
  for (auto kind : spec.preconditioners) {
    if (kind == PreconditionerKind::VCycle || nets.count(kind)) continue;
    const auto it = spec.checkpoints.find(kind);
    if (it == spec.checkpoints.end() || it->second.empty()) {
      throw ConfigError("bench: preconditioner " + to_string(kind) + " needs a checkpoint");
    }
    nets[kind] = std::make_shared<const nn::HelmNet<float>>(nn::load_checkpoint(it->second).net);
  }
  FgmresOptions opt;
  opt.tol = spec.tol;
  opt.max_iter = spec.max_iter;
  opt.restart = spec.restart;

  std::vector<BenchRow> rows;
  for (Index size : spec.sizes) {
    const SlownessModel<double> model = make_test_model(spec.model_source, size, spec.gamma0);
    const auto hier = GridHierarchy<double>::ShiftedLaplacian(model);
    for (auto kind : spec.preconditioners) {
      const nn::HelmNet<float>* net = kind == PreconditionerKind::VCycle ? nullptr : nets.at(kind).get();
      nn::Encodings<float> enc;
      if (net) enc = net->encode(model);
      double iters = 0.0;
      Index converged = 0;
      for (Index j = 0; j < spec.num_rhs; ++j) {
        const ComplexField<double> b = random_rhs(model.ny(), model.nx(), model.h, spec.seed, j);
        const auto rep = net ? solve_with_learned_preconditioner(model, hier, b, *net, enc, opt).second
                             : solve_vcycle(model, hier, b, ComplexField<double>::ZeroLike(b), opt).second;
        iters += double(rep.iterations);
        if (rep.converged) ++converged;
      }
      rows.push_back(BenchRow{size, to_string(kind), iters / double(spec.num_rhs),
                              double(converged) / double(spec.num_rhs)});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "size,preconditioner,mean_iters,converged_fraction\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.size << "," << r.preconditioner << "," << r.mean_iters << "," << r.converged_fraction << "\n";
  return out.str();
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("bench: cannot write " + path);
  out << bench_csv(rows);
}

json report_json(const SolveReport& rep, const json& config) {
  json j;
  j["iterations"] = rep.iterations;
  j["warmup_iterations"] = rep.warmup_iterations;
  j["converged"] = rep.converged;
  j["wall_time"] = rep.wall_time;
  j["final_true_residual"] = rep.final_true_residual;
  j["relative_residual_history"] = rep.relative_residual_history;
  j["config"] = config;
  return j;
}

void write_history_csv(const std::string& path, const SolveReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << "iteration,relative_residual\n" << std::setprecision(10);
  for (std::size_t i = 0; i < rep.relative_residual_history.size(); ++i) {
    out << i << "," << rep.relative_residual_history[i] << "\n";
  }
}

namespace {

bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

std::string check(const json& s, const json& v, const std::string& where) {
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_matches(t.get<std::string>(), v);
    } else {
      ok = type_matches(s["type"].get<std::string>(), v);
    }
    if (!ok) return where + ": expected type " + s["type"].dump();
  }
  if (s.contains("enum")) {
    bool ok = false;
    for (const auto& e : s["enum"]) ok = ok || e == v;
    if (!ok) return where + ": value not in enum";
  }
  if (v.is_number()) {
    if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) return where + ": below minimum";
    if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) return where + ": above maximum";
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& k : s["required"]) {
        if (!v.contains(k.get<std::string>())) return where + ": missing required key " + k.get<std::string>();
      }
    }
    if (s.contains("properties")) {
      for (const auto& [k, sub] : s["properties"].items()) {
        if (v.contains(k)) {
          auto err = check(sub, v[k], where + "." + k);
          if (!err.empty()) return err;
        }
      }
    }
  }
  if (v.is_array() && s.contains("items")) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto err = check(s["items"], v[i], where + "[" + std::to_string(i) + "]");
      if (!err.empty()) return err;
    }
  }
  return "";
}

}  // namespace

std::string validate_json(const json& schema, const json& doc) { return check(schema, doc, "$"); }

}  // namespace helmnet::bench
