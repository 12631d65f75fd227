#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "gradcheck.hpp"
#include "helmnet/helmholtz.hpp"
#include "helmnet/neural/adam.hpp"
#include "helmnet/neural/checkpoint.hpp"
#include "helmnet/neural/network.hpp"
#include "test_util.hpp"

using namespace helmnet;
using namespace helmnet::nn;
using test::random_tensor;

namespace {

NetConfig config(SolverVariant v, std::uint64_t seed = 0) {
  NetConfig c;
  c.variant = v;
  c.seed = seed;
  return c;
}

Index count_prefix(const HelmNet<float>& net, const std::string& prefix) {
  Index n = 0;
  for (const auto& p : net.parameters())
    if (p.name.rfind(prefix, 0) == 0) n += p.value.numel();
  return n;
}

template <typename S>
Encodings<S> batch_encodings(HelmNet<S>& net, Tape<S>& tape, const Tensor<S>& models, std::array<Var<S>, 3>& out,
                             bool training) {
  out = net.encode(tape, tape.constant(models), training);
  return {out[0].value(), out[1].value(), out[2].value()};
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / ("helmnet_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("parameter counts") {
  const HelmNet<float> imp(config(SolverVariant::Implicit)), exp(config(SolverVariant::Explicit));
  CHECK(imp.encoder_parameter_count() == 1214496);
  CHECK(exp.encoder_parameter_count() == 1214496);
  CHECK(imp.solver_parameter_count() == 341538);
  CHECK(exp.solver_parameter_count() == 340962);
  // The only difference is 32 complex 3x3 kernels.
  CHECK(imp.solver_parameter_count() - exp.solver_parameter_count() == 32 * 2 * 9);

  // Closed form for the inverted bottlenecks.
  CHECK(count_prefix(imp, "solver.down.0.ib") == inverted_bottleneck_parameter_count(16));
  CHECK(count_prefix(imp, "solver.down.1.ib") == inverted_bottleneck_parameter_count(32));
  CHECK(count_prefix(imp, "solver.down.2.ib") == inverted_bottleneck_parameter_count(64));
  CHECK(inverted_bottleneck_parameter_count(16) == 64 * 16 + 128 + 9 * 64 + 128 + 64 * 16 + 32);

  CHECK(imp.architecture_hash() != exp.architecture_hash());
  CHECK(imp.architecture_hash() == HelmNet<float>(config(SolverVariant::Implicit, 99)).architecture_hash());
}

TEST_CASE("supported input sizes and variant names") {
  for (Index n : {17, 24, 25, 32, 64, 65, 128, 129, 256, 257}) CHECK(supported_input_size(n));
  for (Index n : {8, 9, 15, 16, 18, 20, 63, 130}) CHECK_FALSE(supported_input_size(n));
  CHECK(parse_variant("implicit_net") == SolverVariant::Implicit);
  CHECK(parse_variant(to_string(SolverVariant::Explicit)) == SolverVariant::Explicit);
  CHECK_THROWS_AS(parse_variant("vcycle"), ConfigError);
}

TEST_CASE("shape contracts") {
  std::mt19937_64 rng(1);
  for (auto v : {SolverVariant::Implicit, SolverVariant::Explicit}) {
    HelmNet<float> net(config(v, 3));
    for (Index n : {17, 24, 33, 40, 64, 65}) {
      const auto m = make_model<double>(test::random_kappa_sq(n, n, rng), 0.01);
      const auto enc = net.encode(m);
      const Index c[3] = {16, 32, 64};
      Index s = n;
      for (int l = 0; l < 3; ++l) {
        s = (s + 1) / 2;
        CHECK(enc[l].shape() == Shape{1, c[l], s, s});
      }
      const auto r = random_tensor<float>(Shape{3, 2, n, n}, rng);
      CHECK(net.solve(r, enc).shape() == Shape{3, 2, n, n});
    }
    Tape<float> tape(false);
    CHECK_THROWS_AS(net.encode(tape, tape.constant(Tensor<float>(Shape{1, 2, 18, 18})), false), DimensionError);
    CHECK_THROWS_AS(net.encode(tape, tape.constant(Tensor<float>(Shape{1, 3, 24, 24})), false), DimensionError);
    const auto m = make_model<double>(test::random_kappa_sq(24, 24, rng), 0.01);
    CHECK_THROWS_AS(net.solve(Tensor<float>(Shape{1, 2, 32, 32}), net.encode(m)), DimensionError);
  }
}

TEST_CASE("construction is seeded; copies are deep") {
  const HelmNet<float> a(config(SolverVariant::Implicit, 5)), b(config(SolverVariant::Implicit, 5)),
      c(config(SolverVariant::Implicit, 6));
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    same &= (a.parameters()[i].value.array() == b.parameters()[i].value.array()).all();
    differ |= !(a.parameters()[i].value.array() == c.parameters()[i].value.array()).all();
  }
  CHECK(same);
  CHECK(differ);

  std::mt19937_64 rng(2);
  HelmNet<float> copy = a;
  const auto m = make_model<double>(test::random_kappa_sq(32, 32, rng), 0.01);
  const auto r = random_tensor<float>(Shape{1, 2, 32, 32}, rng);
  const auto out_a = a.solve(r, a.encode(m));
  CHECK((copy.solve(r, copy.encode(m)).array() == out_a.array()).all());
  for (auto& p : copy.parameters()) p.value.array() *= 1.5f;
  CHECK((a.solve(r, a.encode(m)).array() == out_a.array()).all());
  CHECK_FALSE((copy.solve(r, copy.encode(m)).array() == out_a.array()).all());
}

TEST_CASE("the solver is nonlinear in the residual; predict is positively homogeneous") {
  std::mt19937_64 rng(3);
  for (auto v : {SolverVariant::Implicit, SolverVariant::Explicit}) {
    HelmNet<double> net(config(v, 7));
    const auto m = make_model<double>(test::random_kappa_sq(33, 33, rng), 0.01);
    const auto enc = net.encode(m);
    const auto r = random_tensor<double>(Shape{1, 2, 33, 33}, rng);
    Tensor<double> r2 = r;
    r2.array() *= 3.0;
    const auto y1 = net.solve(r, enc), y2 = net.solve(r2, enc);
    const double dev = (y2.array() - 3.0 * y1.array()).matrix().norm() / (3.0 * y1.array()).matrix().norm();
    MESSAGE(to_string(v) << " deviation from linearity " << dev);
    CHECK(dev > 1e-2);

    const auto f = test::random_field(33, 33, m.h, rng);
    ComplexField<double> f2 = f;
    f2.values() *= 4.0;
    const auto p1 = net.predict(f, enc), p2 = net.predict(f2, enc);
    CHECK(test::rel_err(p2.values(), (4.0 * p1.values()).eval()) < 1e-12);
    CHECK(net.predict(ComplexField<double>::ZeroLike(f), enc).values().norm() == 0.0);

    // error_target undoes predict's output scaling.
    const auto t = net.error_target(f, p1);
    const auto raw = net.solve(net.residual_input(f), enc);
    CHECK((t.array() - raw.array()).abs().maxCoeff() < 1e-10 * raw.array().abs().maxCoeff());
  }
}

TEST_CASE("no dead gradients and the full network passes a directional derivative check") {
  std::mt19937_64 rng(4);
  for (auto v : {SolverVariant::Implicit, SolverVariant::Explicit}) {
    HelmNet<double> net(config(v, 11));
    const Index n = 17;
    const auto models = random_tensor<double>(Shape{2, 2, n, n}, rng);
    const auto resid = random_tensor<double>(Shape{4, 2, n, n}, rng);
    const auto target = random_tensor<double>(Shape{4, 2, n, n}, rng);

    auto loss = [&](bool backward) {
      Tape<double> tape(backward);
      std::array<Var<double>, 3> enc;
      enc = net.encode(tape, tape.constant(models), true);
      for (auto& e : enc) e = repeat_batch(e, 2);
      const auto out = net.solve(tape, tape.constant(resid), enc, true);
      const auto l = mse_loss(out, tape.constant(target));
      if (backward) tape.backward(l);
      return l.value().data()[0];
    };
    // Only parameters bound on a gradient-enabled tape collect gradients.
    net.zero_grad();
    const double l0 = loss(true);
    CHECK(std::isfinite(l0));
    int dead = 0;
    for (const auto& p : net.parameters()) {
      if (p.grad.array().abs().maxCoeff() == 0.0) {
        ++dead;
        MESSAGE("zero gradient for " << p.name);
      }
    }
    CHECK(dead == 0);

    // d/de L(theta + e d) at e = 0 against the accumulated gradients.
    std::vector<Tensor<double>> dir, orig;
    double analytic = 0.0;
    for (auto& p : net.parameters()) {
      dir.push_back(random_tensor<double>(p.value.shape(), rng));
      orig.push_back(p.value);
      analytic += (dir.back().array() * p.grad.array()).sum();
    }
    auto shifted = [&](double e) {
      for (std::size_t i = 0; i < dir.size(); ++i)
        net.parameters()[i].value.array() = orig[i].array() + e * dir[i].array();
      return loss(false);
    };
    const double step = 1e-6;
    const double numeric = (shifted(step) - shifted(-step)) / (2 * step);
    shifted(0.0);
    MESSAGE(to_string(v) << " directional derivative analytic " << analytic << " numeric " << numeric);
    CHECK(std::abs(analytic - numeric) < 1e-4 * std::abs(numeric));
  }
}

TEST_CASE("Adam") {
  SUBCASE("first step moves every coordinate by lr against the gradient sign") {
    std::vector<Parameter<double>> ps;
    ps.emplace_back("p", Tensor<double>(Shape{1, 1, 1, 4}));
    const double g[4] = {2.0, -0.5, 1e-3, -7.0};
    std::copy(g, g + 4, ps[0].grad.data());
    Adam<double> opt(AdamOptions{0.01});
    opt.step(ps);
    CHECK(opt.steps() == 1);
    for (int i = 0; i < 4; ++i) {
      const double expect = -0.01 * g[i] / (std::abs(g[i]) + 1e-8);
      CHECK(ps[0].value.data()[i] == doctest::Approx(expect).epsilon(1e-6));
    }
  }
  SUBCASE("matches the textbook recursion over several steps") {
    std::vector<Parameter<double>> ps;
    ps.emplace_back("p", Tensor<double>::Constant(Shape{1, 1, 1, 1}, 1.0));
    Adam<double> opt(AdamOptions{0.05, 0.8, 0.9, 1e-8});
    double x = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
      const double grad = 3.0 * x * x;
      ps[0].grad.data()[0] = 3.0 * ps[0].value.data()[0] * ps[0].value.data()[0];
      opt.step(ps);
      m = 0.8 * m + 0.2 * grad;
      v = 0.9 * v + 0.1 * grad * grad;
      x -= 0.05 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.9, t))) + 1e-8);
      CHECK(ps[0].value.data()[0] == doctest::Approx(x).epsilon(1e-12));
    }
  }
  SUBCASE("minimizes a quadratic; lr = 0 is a no-op") {
    std::vector<Parameter<double>> ps;
    ps.emplace_back("p", Tensor<double>::Constant(Shape{1, 1, 2, 2}, 3.0));
    Adam<double> opt(AdamOptions{0.05});
    for (int it = 0; it < 2000; ++it) {
      ps[0].grad.array() = 2.0 * (ps[0].value.array() - 1.0);
      opt.step(ps);
    }
    CHECK((ps[0].value.array() - 1.0).abs().maxCoeff() < 1e-3);

    const auto before = ps[0].value;
    opt.options().lr = 0.0;
    ps[0].grad.array() = 5.0;
    opt.step(ps);
    CHECK((ps[0].value.array() == before.array()).all());
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = temp_dir();
  const std::string path = (dir / "net.ckpt").string();
  NetConfig c = config(SolverVariant::Implicit, 21);
  c.normalize_input = false;
  c.output_scale = 2.5;
  HelmNet<float> net(c);
  std::mt19937_64 rng(5);
  // Non-trivial buffers so they are checked too.
  for (auto& b : net.buffers()) b.value.array() += random_tensor<float>(b.value.shape(), rng).array().abs();
  save_checkpoint(net, path, {{"epochs", "12"}, {"corpus", "a b c"}});
  CHECK(std::filesystem::exists(path + ".bin"));
  CHECK(std::filesystem::file_size(path + ".bin") ==
        std::uintmax_t(4 * (net.encoder_parameter_count() + net.solver_parameter_count() + [&] {
                         Index n = 0;
                         for (const auto& b : net.buffers()) n += b.value.numel();
                         return n;
                       }())));

  const auto loaded = load_checkpoint(path);
  CHECK(loaded.meta.at("epochs") == "12");
  CHECK(loaded.meta.at("corpus") == "a b c");
  CHECK(loaded.net.config().variant == SolverVariant::Implicit);
  CHECK_FALSE(loaded.net.config().normalize_input);
  CHECK(loaded.net.config().output_scale == 2.5);
  CHECK(loaded.net.config().seed == 21);
  for (std::size_t i = 0; i < net.parameters().size(); ++i)
    CHECK((loaded.net.parameters()[i].value.array() == net.parameters()[i].value.array()).all());
  for (std::size_t i = 0; i < net.buffers().size(); ++i)
    CHECK((loaded.net.buffers()[i].value.array() == net.buffers()[i].value.array()).all());

  const auto m = make_model<double>(test::random_kappa_sq(24, 24, rng), 0.01);
  const auto r = test::random_field(24, 24, m.h, rng);
  CHECK((net.predict(r, net.encode(m)).values() - loaded.net.predict(r, loaded.net.encode(m)).values()).norm() ==
        0.0);

  SUBCASE("failures are ConfigError") {
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), ConfigError);
    CHECK_THROWS_AS(save_checkpoint(net, path, {{"bad key", "x"}}), ConfigError);

    // Truncated blob.
    std::filesystem::resize_file(path + ".bin", 100);
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);

    // Wrong architecture: an explicit checkpoint relabelled as implicit.
    save_checkpoint(HelmNet<float>(config(SolverVariant::Explicit)), path);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    text.replace(text.find("variant explicit"), 16, "variant implicit");
    std::ofstream(path) << text;
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  }
  std::filesystem::remove_all(dir);
}
