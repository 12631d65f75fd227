// helmnet: solve, bench, datagen, train and retrain from the command line.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "helmnet/bench.hpp"
#include "helmnet/datagen.hpp"
#include "helmnet/neural/checkpoint.hpp"
#include "helmnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace helmnet;
using bench::json;

namespace {

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json argv_json(int argc, char** argv) {
  json a = json::array();
  for (int i = 0; i < argc; ++i) a.push_back(argv[i]);
  return a;
}

std::string or_default(const std::string& v, const std::string& fallback) { return v.empty() ? fallback : v; }

struct SolveArgs {
  std::string model = "blobs:9001", preconditioner = "v_cycle", checkpoint, rhs = "point", out = "solution.field";
  std::string report, history;
  Index size = 128;
  double tol = 1e-7, gamma0 = bench::kTestGamma0;
  Index max_iter = 250, restart = 10;
  std::uint64_t seed = 0;
};

int cmd_solve(const SolveArgs& a, const json& argv) {
  const auto kind = bench::parse_preconditioner(a.preconditioner);
  std::unique_ptr<nn::HelmNet<float>> net;
  if (kind != bench::PreconditionerKind::VCycle) {
    if (a.checkpoint.empty()) throw ConfigError("solve: preconditioner " + a.preconditioner + " needs --checkpoint");
    net = std::make_unique<nn::HelmNet<float>>(nn::load_checkpoint(a.checkpoint).net);
  }
  const auto model = bench::make_test_model(a.model, a.size, a.gamma0);
  ComplexField<double> b;
  if (a.rhs == "point") b = bench::point_source(model.ny(), model.nx(), model.h);
  else if (a.rhs == "random") b = bench::random_rhs(model.ny(), model.nx(), model.h, a.seed, 0);
  else b = bench::read_field(a.rhs);
  if (b.nx() != model.nx() || b.ny() != model.ny()) throw DimensionError("solve: rhs does not match the model grid");

  FgmresOptions opt;
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  opt.restart = a.restart;
  const auto [x, rep] = bench::solve_problem(model, b, kind, net.get(), opt);
  bench::write_field(a.out, x);

  const json config = {{"command", "solve"},   {"argv", argv},          {"model", a.model},
                       {"size", a.size},       {"preconditioner", a.preconditioner},
                       {"checkpoint", a.checkpoint}, {"rhs", a.rhs}, {"tol", a.tol},
                       {"max_iter", a.max_iter}, {"restart", a.restart}, {"gamma0", a.gamma0},
                       {"seed", a.seed},       {"solution", a.out}};
  write_json(or_default(a.report, a.out + ".report.json"), bench::report_json(rep, config));
  bench::write_history_csv(or_default(a.history, a.out + ".history.csv"), rep);
  std::printf("iterations %ld converged %d relative_residual %.3e\n", long(rep.iterations), int(rep.converged),
              rep.final_true_residual);
  return 0;
}

struct BenchArgs {
  std::vector<Index> sizes{128};
  std::vector<std::string> preconditioners{"v_cycle"};
  std::string explicit_ckpt, implicit_ckpt, model = "blobs:9001", out = "bench.csv", manifest;
  Index num_rhs = 20, max_iter = 250, restart = 10;
  double tol = 1e-7, gamma0 = bench::kTestGamma0;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, const json& argv) {
  bench::BenchSpec spec;
  spec.sizes = a.sizes;
  spec.preconditioners.clear();
  for (const auto& p : a.preconditioners) spec.preconditioners.push_back(bench::parse_preconditioner(p));
  if (!a.explicit_ckpt.empty()) spec.checkpoints[bench::PreconditionerKind::ExplicitNet] = a.explicit_ckpt;
  if (!a.implicit_ckpt.empty()) spec.checkpoints[bench::PreconditionerKind::ImplicitNet] = a.implicit_ckpt;
  spec.model_source = a.model;
  spec.num_rhs = a.num_rhs;
  spec.tol = a.tol;
  spec.max_iter = a.max_iter;
  spec.restart = a.restart;
  spec.gamma0 = a.gamma0;
  spec.seed = a.seed;
  const auto rows = bench::run_bench(spec);
  bench::write_bench_csv(a.out, rows);
  std::cout << bench::bench_csv(rows);
  write_json(or_default(a.manifest, a.out + ".manifest.json"),
             {{"command", "bench"}, {"argv", argv}, {"sizes", a.sizes}, {"preconditioners", a.preconditioners},
              {"explicit_checkpoint", a.explicit_ckpt}, {"implicit_checkpoint", a.implicit_ckpt},
              {"model", a.model}, {"num_rhs", a.num_rhs}, {"tol", a.tol}, {"max_iter", a.max_iter},
              {"restart", a.restart}, {"gamma0", a.gamma0}, {"seed", a.seed}, {"output", a.out}});
  return 0;
}

struct DatagenArgs {
  std::string out = "corpus";
  Index count = 64, image_size = 128, size = 64, samples = 0;
  std::uint64_t seed = 0;
  bool layered = false;
};

int cmd_datagen(const DatagenArgs& a, const json& argv) {
  if (a.count < 1 || a.image_size < 4) throw ConfigError("datagen: need count >= 1 and image size >= 4");
  fs::create_directories(a.out);
  std::vector<std::string> names;
  if (a.layered) {
    for (Index i = 0; i < a.count; ++i) {
      const std::string name = "layered_" + std::to_string(i) + ".f64";
      data::write_f64((fs::path(a.out) / name).string(), data::layered_medium(a.image_size, a.seed + std::uint64_t(i)));
      names.push_back(name);
    }
  } else {
    names = data::write_synthetic_corpus(a.out, a.count, a.image_size, a.seed);
  }
  json manifest = {{"command", "datagen"}, {"argv", argv}, {"kind", a.layered ? "layered" : "blobs"},
                   {"count", a.count}, {"image_size", a.image_size}, {"seed", a.seed}, {"files", names}};
  if (a.samples > 0) {
    // Training-pair manifest: enough to regenerate every pair exactly.
    const data::Dataset ds(data::load_slowness_corpus(a.out, a.size), a.samples, a.seed);
    const std::string path = (fs::path(a.out) / "dataset.manifest").string();
    ds.write_manifest(path, names);
    manifest["dataset_manifest"] = path;
    manifest["dataset_size"] = a.size;
    manifest["samples"] = a.samples;
  }
  write_json((fs::path(a.out) / "corpus.manifest.json").string(), manifest);
  std::printf("wrote %zu models to %s\n", names.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string config, corpus, variant = "implicit", out = "net.ckpt", loss, checkpoint_dir, init;
  Index max_epochs = -1;
  double lr = -1.0, output_scale = 10.0;
  long long seed = -1;
  bool raw_input = false;
};

int cmd_train(const TrainArgs& a, const json& argv) {
  train::TrainConfig cfg = a.config.empty() ? train::TrainConfig{} : train::load_train_config(a.config);
  if (a.max_epochs >= 0) cfg.max_epochs = a.max_epochs;
  if (a.lr >= 0) cfg.lr = a.lr;
  if (a.seed >= 0) cfg.seed = std::uint64_t(a.seed);
  if (!a.checkpoint_dir.empty()) cfg.checkpoint_dir = a.checkpoint_dir;
  cfg.validate();
  if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);

  nn::HelmNet<float> net = a.init.empty() ? nn::HelmNet<float>(nn::NetConfig{nn::parse_variant(a.variant),
                                                                             !a.raw_input, a.output_scale, cfg.seed})
                                          : nn::load_checkpoint(a.init).net;
  std::vector<std::vector<SlownessModel<double>>> corpora;
  for (Index s : cfg.sizes) corpora.push_back(data::load_slowness_corpus(a.corpus, s));

  const std::string loss_path = or_default(a.loss, a.out + ".loss.csv");
  std::vector<train::EpochRecord> seen;
  const auto result = train::train(net, cfg, corpora, [&](const train::EpochRecord& r) {
    seen.push_back(r);
    train::write_loss_csv(loss_path, seen);
    std::printf("epoch %ld size %ld train %.5g val %.5g lr %.2g\n", long(r.epoch), long(r.size), r.train_mse,
                r.val_mse, r.lr);
    std::fflush(stdout);
    return true;
  });
  train::write_loss_csv(loss_path, result.history);
  nn::save_checkpoint(net, a.out,
                      {{"epochs", std::to_string(result.epochs_run)}, {"final_lr", std::to_string(result.final_lr)},
                       {"corpus", a.corpus}});
  write_json(a.out + ".manifest.json",
             {{"command", "train"}, {"argv", argv}, {"variant", nn::to_string(net.config().variant)},
              {"corpus", a.corpus}, {"config", train::format_train_config(cfg)}, {"init", a.init},
              {"normalize_input", net.config().normalize_input}, {"output_scale", net.config().output_scale},
              {"checkpoint", a.out}, {"loss_csv", loss_path}, {"epochs_run", result.epochs_run}});
  return 0;
}

struct RetrainArgs {
  std::string checkpoint, model = "layered:7", out = "retrained.ckpt", loss;
  Index size = 128, pairs = 300, epochs = 30, batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

int cmd_retrain(const RetrainArgs& a, const json& argv) {
  if (a.checkpoint.empty()) throw ConfigError("retrain: --checkpoint is required");
  if (a.size % 2 != 0) throw ConfigError("retrain: evaluation size must be even");
  const auto loaded = nn::load_checkpoint(a.checkpoint);
  // Fine-tuning happens at half the evaluation resolution with the training attenuation.
  const auto model = bench::make_test_model(a.model, a.size / 2, data::kTrainingGamma0);
  train::RetrainOptions opt{a.pairs, a.epochs, a.lr, a.batch_size, a.seed};
  std::vector<train::EpochRecord> history;
  const auto tuned = train::retrain_ood(loaded.net, model, opt, &history);
  nn::save_checkpoint(tuned, a.out, {{"retrained_from", a.checkpoint}, {"model", a.model}});
  train::write_loss_csv(or_default(a.loss, a.out + ".loss.csv"), history);
  write_json(a.out + ".manifest.json",
             {{"command", "retrain"}, {"argv", argv}, {"checkpoint", a.checkpoint}, {"model", a.model},
              {"size", a.size}, {"pairs", a.pairs}, {"epochs", a.epochs}, {"lr", a.lr},
              {"batch_size", a.batch_size}, {"seed", a.seed}, {"output", a.out}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned multigrid preconditioning for the Helmholtz equation"};
  app.require_subcommand(1);
  const json args = argv_json(argc, argv);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve one Helmholtz problem");
  solve->add_option("--model", sa.model, "Slowness source: image path, blobs:<seed> or layered:<seed>");
  solve->add_option("--size", sa.size, "Grid intervals per axis (nodes = size + 1)");
  solve->add_option("--preconditioner", sa.preconditioner, "v_cycle | explicit_net | implicit_net");
  solve->add_option("--checkpoint", sa.checkpoint);
  solve->add_option("--rhs", sa.rhs, "point | random | path to a field file");
  solve->add_option("--tol", sa.tol);
  solve->add_option("--max-iter", sa.max_iter);
  solve->add_option("--restart", sa.restart);
  solve->add_option("--gamma0", sa.gamma0);
  solve->add_option("--seed", sa.seed);
  solve->add_option("--out", sa.out, "Solution field file");
  solve->add_option("--report", sa.report, "Report JSON (default <out>.report.json)");
  solve->add_option("--history", sa.history, "Residual history CSV (default <out>.history.csv)");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Mean iterations per size and preconditioner");
  bench_cmd->add_option("--sizes", ba.sizes)->delimiter(',');
  bench_cmd->add_option("--preconditioners", ba.preconditioners)->delimiter(',');
  bench_cmd->add_option("--explicit-checkpoint", ba.explicit_ckpt);
  bench_cmd->add_option("--implicit-checkpoint", ba.implicit_ckpt);
  bench_cmd->add_option("--model", ba.model);
  bench_cmd->add_option("--num-rhs", ba.num_rhs);
  bench_cmd->add_option("--tol", ba.tol);
  bench_cmd->add_option("--max-iter", ba.max_iter);
  bench_cmd->add_option("--restart", ba.restart);
  bench_cmd->add_option("--gamma0", ba.gamma0);
  bench_cmd->add_option("--seed", ba.seed);
  bench_cmd->add_option("--out", ba.out);
  bench_cmd->add_option("--manifest", ba.manifest);

  DatagenArgs da;
  auto* datagen = app.add_subcommand("datagen", "Write a synthetic slowness corpus");
  datagen->add_option("--out", da.out);
  datagen->add_option("--count", da.count);
  datagen->add_option("--image-size", da.image_size);
  datagen->add_option("--seed", da.seed);
  datagen->add_flag("--layered", da.layered, "Layered media instead of random blobs");
  datagen->add_option("--samples", da.samples, "Also write a training-pair manifest with this many samples");
  datagen->add_option("--size", da.size, "Grid intervals for the training-pair manifest");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train an encoder-solver network");
  train_cmd->add_option("--config", ta.config, "key = value config file");
  train_cmd->add_option("--corpus", ta.corpus)->required();
  train_cmd->add_option("--variant", ta.variant, "implicit | explicit");
  train_cmd->add_option("--out", ta.out);
  train_cmd->add_option("--loss", ta.loss);
  train_cmd->add_option("--checkpoint-dir", ta.checkpoint_dir);
  train_cmd->add_option("--init", ta.init, "Start from this checkpoint");
  train_cmd->add_option("--max-epochs", ta.max_epochs);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--output-scale", ta.output_scale);
  train_cmd->add_flag("--raw-input", ta.raw_input, "Disable residual normalization");

  RetrainArgs ra;
  auto* retrain = app.add_subcommand("retrain", "Fine-tune on one out-of-distribution model");
  retrain->add_option("--checkpoint", ra.checkpoint)->required();
  retrain->add_option("--model", ra.model);
  retrain->add_option("--size", ra.size, "Evaluation grid intervals; training uses half");
  retrain->add_option("--pairs", ra.pairs);
  retrain->add_option("--epochs", ra.epochs);
  retrain->add_option("--lr", ra.lr);
  retrain->add_option("--batch-size", ra.batch_size);
  retrain->add_option("--seed", ra.seed);
  retrain->add_option("--out", ra.out);
  retrain->add_option("--loss", ra.loss);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "usage_error"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*solve) return cmd_solve(sa, args);
    if (*bench_cmd) return cmd_bench(ba, args);
    if (*datagen) return cmd_datagen(da, args);
    if (*train_cmd) return cmd_train(ta, args);
    if (*retrain) return cmd_retrain(ra, args);
  } catch (const Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal_error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 1;
}
