#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "helmnet/bench.hpp"
#include "helmnet/datagen.hpp"
#include "helmnet/neural/checkpoint.hpp"

using namespace helmnet;
using bench::json;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / ("helmnet_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }

  /// Runs the CLI inside the workspace; returns the exit status. stderr goes to err.txt.
  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" + HELMNET_CLI + "' " + args + " > out.txt 2> err.txt";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  std::string read(const std::string& f) const {
    std::ifstream in(dir / f, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  }
};

json schema(const std::string& name) {
  std::ifstream in(std::string(HELMNET_SOURCE_DIR) + "/schemas/" + name);
  return json::parse(in);
}

Index line_count(const std::string& s) { return Index(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("solve writes a field, a schema-valid report and a history") {
  Workspace ws;
  REQUIRE(ws.run("solve --size 32 --model blobs:5 --out u.field") == 0);
  const auto u = bench::read_field(ws / "u.field");
  CHECK(u.nx() == 33);
  const json rep = json::parse(ws.read("u.field.report.json"));
  CHECK(bench::validate_json(schema("report.schema.json"), rep) == "");
  CHECK(rep["converged"] == true);
  CHECK(rep["config"]["rhs"] == "point");
  CHECK(line_count(ws.read("u.field.history.csv")) == rep["iterations"].get<Index>() + 2);

  // tol = 1: nothing to do.
  REQUIRE(ws.run("solve --size 32 --tol 1 --out t.field") == 0);
  CHECK(json::parse(ws.read("t.field.report.json"))["iterations"] == 0);
}

TEST_CASE("errors: machine-readable JSON on stderr, nonzero exit") {
  Workspace ws;
  CHECK(ws.run("solve --size 32 --preconditioner implicit_net --out x.field") == 1);
  const json err = json::parse(ws.read("err.txt"));
  CHECK(err["error"] == "config_error");
  CHECK(err["message"].get<std::string>().find("checkpoint") != std::string::npos);

  CHECK(ws.run("solve --size 32 --checkpoint missing.ckpt --preconditioner explicit_net --out x.field") == 1);
  CHECK(json::parse(ws.read("err.txt"))["error"] == "config_error");
  CHECK(ws.run("bench --sizes 32 --tol 2") == 1);
  CHECK(ws.run("solve --no-such-flag") == 2);
  CHECK(ws.run("frobnicate") != 0);
}

TEST_CASE("bench is deterministic and writes a manifest") {
  Workspace ws;
  REQUIRE(ws.run("bench --sizes 32,64 --num-rhs 2 --seed 4 --out a.csv") == 0);
  REQUIRE(ws.run("bench --sizes 32,64 --num-rhs 2 --seed 4 --out b.csv") == 0);
  CHECK(ws.read("a.csv") == ws.read("b.csv"));
  CHECK(line_count(ws.read("a.csv")) == 3);
  const json m = json::parse(ws.read("a.csv.manifest.json"));
  CHECK(bench::validate_json(schema("manifest.schema.json"), m) == "");
  CHECK(m["seed"] == 4);
}

TEST_CASE("datagen manifest regenerates the first training pair") {
  Workspace ws;
  REQUIRE(ws.run("datagen --out corpus --count 3 --image-size 40 --seed 8 --samples 5 --size 24") == 0);
  const json m = json::parse(ws.read("corpus/corpus.manifest.json"));
  CHECK(bench::validate_json(schema("manifest.schema.json"), m) == "");
  CHECK(m["files"].size() == 3);

  // Rebuild the dataset from the manifest alone.
  std::istringstream in(ws.read("corpus/dataset.manifest"));
  std::map<std::string, std::string> kv;
  std::string key, value;
  while (in >> key && std::getline(in >> std::ws, value)) kv[key] = value;
  const Index nodes = std::stol(kv.at("nodes"));
  const data::Dataset ds(data::load_slowness_corpus(ws / "corpus", nodes - 1), std::stol(kv.at("samples_per_epoch")),
                         std::stoull(kv.at("seed")), std::stoi(kv.at("k_min")), std::stoi(kv.at("k_max")));
  const data::Dataset ref(data::load_slowness_corpus(ws / "corpus", 24), 5, 8);
  CHECK(nodes == 25);
  CHECK((ds.sample(0).residual.values() - ref.sample(0).residual.values()).norm() == 0.0);
  CHECK((ds.sample(0).error.values() - ref.sample(0).error.values()).norm() == 0.0);
}

TEST_CASE("train and retrain through the CLI") {
  Workspace ws;
  REQUIRE(ws.run("datagen --out corpus --count 4 --image-size 32 --seed 1") == 0);
  {
    std::ofstream cfg(ws / "tiny.cfg");
    cfg << "sizes = 24\nsamples_per_epoch = 4\nepochs_per_size_block = 1\nmax_epochs = 2\n"
           "batch_size = 2\nmodels_per_batch = 2\nval_samples = 2\nseed = 3\n";
  }
  REQUIRE(ws.run("train --config tiny.cfg --corpus corpus --variant explicit --out a.ckpt") == 0);
  const std::string loss = ws.read("a.ckpt.loss.csv");
  CHECK(line_count(loss) == 3);  // header + one row per epoch
  CHECK(loss.rfind("epoch,size,train_mse,val_mse,lr\n", 0) == 0);
  const json m = json::parse(ws.read("a.ckpt.manifest.json"));
  CHECK(bench::validate_json(schema("manifest.schema.json"), m) == "");
  CHECK(m["epochs_run"] == 2);

  // Same command, same bytes.
  REQUIRE(ws.run("train --config tiny.cfg --corpus corpus --variant explicit --out b.ckpt") == 0);
  CHECK(ws.read("a.ckpt.bin") == ws.read("b.ckpt.bin"));
  CHECK(ws.read("a.ckpt.loss.csv") == ws.read("b.ckpt.loss.csv"));

  // lr = 0 from an initial checkpoint leaves the trainable weights untouched.
  REQUIRE(ws.run("train --config tiny.cfg --corpus corpus --init a.ckpt --lr 0 --out c.ckpt") == 0);
  const auto a = nn::load_checkpoint(ws / "a.ckpt"), c = nn::load_checkpoint(ws / "c.ckpt");
  for (std::size_t i = 0; i < a.net.parameters().size(); ++i)
    CHECK((a.net.parameters()[i].value.array() == c.net.parameters()[i].value.array()).all());

  REQUIRE(ws.run("retrain --checkpoint a.ckpt --model layered:3 --size 48 --pairs 4 --epochs 2 --batch-size 2 "
                 "--out r.ckpt") == 0);
  CHECK(line_count(ws.read("r.ckpt.loss.csv")) == 3);
  const auto r = nn::load_checkpoint(ws / "r.ckpt");
  CHECK(r.meta.at("retrained_from") == "a.ckpt");
  CHECK(ws.run("retrain --checkpoint a.ckpt --size 47 --out s.ckpt") == 1);
}
