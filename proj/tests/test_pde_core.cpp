#include <doctest.h>

#include <Eigen/Dense>

#include "helmnet/helmholtz.hpp"
#include "test_util.hpp"

using namespace helmnet;
using test::random_field;

namespace {

using DenseC = Eigen::MatrixXcd;
const auto kOrig = HelmholtzShift<double>::Original();

// Dense matrix assembled from the five-point stencil, independent of the
// matrix-free implementation.
DenseC assemble_dense(const SlownessModel<double>& m, HelmholtzShift<double> s) {
  const Index ny = m.ny(), nx = m.nx(), n = nx * ny;
  DenseC A = DenseC::Zero(n, n);
  const double ih2 = 1.0 / (m.h * m.h);
  for (Index y = 0; y < ny; ++y)
    for (Index x = 0; x < nx; ++x) {
      const Index i = y * nx + x;
      const std::complex<double> mass =
          -m.omega * m.omega * m.kappa_sq(y, x) * std::complex<double>(s.alpha, -(s.beta + m.gamma(y, x)));
      A(i, i) = 4.0 * ih2 + mass;
      if (x > 0) A(i, i - 1) = -ih2;
      if (x + 1 < nx) A(i, i + 1) = -ih2;
      if (y > 0) A(i, i - nx) = -ih2;
      if (y + 1 < ny) A(i, i + nx) = -ih2;
    }
  return A;
}

SlownessModel<double> random_model(Index ny, Index nx, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SlownessModel<double> m;
  m.kappa_sq = test::random_kappa_sq(ny, nx, rng);
  m.gamma = RealGrid<double>(ny, nx);
  for (Index i = 0; i < m.gamma.size(); ++i) m.gamma.data()[i] = u(rng);
  m.h = 1.0 / double(std::max<Index>(2, std::max(nx, ny)) - 1);
  m.omega = wavenumber_for_grid(std::max<Index>(2, std::max(nx, ny)), 1.0);
  return m;
}

}  // namespace

TEST_CASE("dense stencil oracle on every grid up to 16x16") {
  std::mt19937_64 rng(11);
  for (Index ny = 1; ny <= 16; ++ny)
    for (Index nx = 1; nx <= 16; ++nx) {
      const auto m = random_model(ny, nx, rng);
      for (auto shift : {HelmholtzShift<double>::Original(), HelmholtzShift<double>::Shifted()}) {
        const auto u = random_field(ny, nx, m.h, rng);
        const ComplexVector<double> expect = assemble_dense(m, shift) * u.values();
        const auto got = apply_helmholtz(u, m, shift);
        REQUIRE(test::rel_err(got.values(), expect) < 1e-12);
      }
    }
}

TEST_CASE("apply_helmholtz: zero, constant interior and grid mismatch") {
  RealGrid<double> k = RealGrid<double>::Ones(8, 8);
  SlownessModel<double> m;
  m.kappa_sq = k;
  m.gamma = RealGrid<double>::Zero(8, 8);
  m.h = 1.0 / 7.0;
  m.omega = 2.0;
  ComplexField<double> zero(8, 8, m.h);
  CHECK(apply_helmholtz(zero, m, kOrig).values().norm() == 0.0);

  ComplexField<double> ones(8, 8, m.h);
  ones.values().setConstant(1.0);
  const auto out = apply_helmholtz(ones, m, kOrig);
  for (Index y = 1; y < 7; ++y)
    for (Index x = 1; x < 7; ++x) CHECK(std::abs(out(y, x) - std::complex<double>(-4.0)) < 1e-9);

  ComplexField<double> wrong(7, 8, m.h);
  CHECK_THROWS_AS(apply_helmholtz(wrong, m, kOrig), DimensionError);
}

TEST_CASE("apply_helmholtz is linear") {
  std::mt19937_64 rng(3);
  const auto m = random_model(13, 10, rng);
  const auto u = random_field(13, 10, m.h, rng), v = random_field(13, 10, m.h, rng);
  const std::complex<double> a(0.3, -1.7), b(-2.1, 0.4);
  ComplexField<double> w(13, 10, m.h);
  w.values() = a * u.values() + b * v.values();
  const ComplexVector<double> lhs = apply_helmholtz(w, m, kOrig).values();
  const ComplexVector<double> rhs = a * apply_helmholtz(u, m, kOrig).values() + b * apply_helmholtz(v, m, kOrig).values();
  CHECK(test::rel_err(lhs, rhs) < 1e-14);
}

TEST_CASE("without attenuation and shift the operator is complex symmetric") {
  std::mt19937_64 rng(5);
  auto m = random_model(9, 12, rng);
  m.gamma.setZero();
  const auto x = random_field(9, 12, m.h, rng), y = random_field(9, 12, m.h, rng);
  const std::complex<double> xay = x.values().transpose() * apply_helmholtz(y, m, kOrig).values();
  const std::complex<double> yax = y.values().transpose() * apply_helmholtz(x, m, kOrig).values();
  CHECK(std::abs(xay - yax) < 1e-10 * std::abs(xay));
}

TEST_CASE("build_abl ramp values") {
  const auto g = build_abl<double>(9, 9, 2, 0.0);
  CHECK(g(4, 4) == 0.0);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(0, 4) == 1.0);

  const auto g17 = build_abl<double>(17, 17, 4, 0.01);
  const double expect = 0.01 + 0.99 * (3.0 / 4.0) * (3.0 / 4.0);
  CHECK(g17(1, 8) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(g17(8, 8) == 0.01);

  // Monotone toward the boundary, mirror symmetric on both axes.
  const auto a = build_abl<double>(23, 15, 5, 0.05);
  for (Index y = 0; y < 15; ++y)
    for (Index x = 0; x < 23; ++x) {
      CHECK(a(y, x) == a(y, 22 - x));
      CHECK(a(y, x) == a(14 - y, x));
      CHECK(a(y, x) >= 0.05);
      CHECK(a(y, x) <= 1.0);
    }
  for (Index x = 1; x <= 11; ++x) CHECK(a(7, x) <= a(7, x - 1));
}

TEST_CASE("build_abl rejects bad arguments") {
  CHECK_THROWS_AS(build_abl<double>(9, 9, 5, 0.0), DimensionError);
  CHECK_THROWS_AS(build_abl<double>(9, 9, 0, 0.0), DimensionError);
  CHECK_THROWS_AS(build_abl<double>(9, 9, 2, 0.5), ConfigError);
}

TEST_CASE("wavenumber_for_grid") {
  CHECK(wavenumber_for_grid(129, 1.0) == doctest::Approx(80.384).epsilon(1e-14));
  CHECK(wavenumber_for_grid(257, 1.0) == doctest::Approx(160.768).epsilon(1e-14));
  CHECK(wavenumber_for_grid(129, 0.5) == doctest::Approx(160.768).epsilon(1e-14));
  CHECK_THROWS(wavenumber_for_grid(1, 1.0));
  CHECK_THROWS(wavenumber_for_grid(9, 0.0));

  // Doubling the resolution doubles omega and keeps omega kappa h.
  for (Index n : {33, 65, 129}) {
    const double w1 = wavenumber_for_grid(n, 0.8), w2 = wavenumber_for_grid(2 * n - 1, 0.8);
    CHECK(w2 == doctest::Approx(2 * w1));
    CHECK(w2 * 0.8 / double(2 * n - 2) == doctest::Approx(0.628));
  }
}

TEST_CASE("make_model satisfies the model invariants") {
  std::mt19937_64 rng(8);
  const auto m = make_model<double>(test::random_kappa_sq(65, 65, rng), 0.01);
  CHECK(m.h == doctest::Approx(1.0 / 64));
  CHECK(m.omega * std::sqrt(m.kappa_sq.maxCoeff()) * m.h == doctest::Approx(0.628));
  CHECK(m.gamma.minCoeff() == doctest::Approx(0.01));
  CHECK(m.gamma.maxCoeff() == 1.0);
  CHECK(m.gamma(32, 32) == doctest::Approx(0.01));
}
