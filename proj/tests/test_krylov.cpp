#include <doctest.h>

#include <Eigen/Dense>

#include "helmnet/krylov.hpp"
#include "test_util.hpp"

using namespace helmnet;

namespace {

using Mat = Eigen::MatrixXcd;
using Vec = ComplexVector<double>;

Mat random_matrix(Index n, std::mt19937_64& rng, double diag, double scale) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat A(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) A(i, j) = scale * std::complex<double>(d(rng), d(rng));
  A.diagonal().array() += diag;
  return A;
}

Vec random_vec(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = {d(rng), d(rng)};
  return v;
}

LinearMap<double> dense_map(const Mat& A) {
  return [A](const Vec& in, Vec& out) { out = A * in; };
}

const LinearMap<double> kIdentity = [](const Vec& in, Vec& out) { out = in; };

// Standard right-preconditioned GMRES residuals from an explicit Krylov basis:
// min over y of ||r0 - A M K_k y|| with K_k = [r0, (AM) r0, ...].
std::vector<double> gmres_oracle(const Mat& AM, const Vec& r0, Index steps) {
  std::vector<double> res{1.0};
  Mat K(r0.size(), 0);
  Vec v = r0;
  for (Index k = 1; k <= steps; ++k) {
    K.conservativeResize(Eigen::NoChange, k);
    K.col(k - 1) = v / v.norm();
    v = AM * K.col(k - 1);
    // Orthonormal basis of the search space, then project.
    const Mat W = AM * K;
    Eigen::HouseholderQR<Mat> qr(W);
    const Mat Q = qr.householderQ() * Mat::Identity(W.rows(), k);
    const Vec resid = r0 - Q * (Q.adjoint() * r0);
    res.push_back(resid.norm() / r0.norm());
  }
  return res;
}

}  // namespace

TEST_CASE("identity system converges in one iteration") {
  std::mt19937_64 rng(1);
  const Vec b = random_vec(37, rng);
  FgmresOptions opt;
  const auto [x, rep] = fgmres<double>(kIdentity, kIdentity, b, Vec::Zero(37), opt);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK((x - b).norm() < 1e-12 * b.norm());
  CHECK(rep.relative_residual_history.front() == 1.0);
}

TEST_CASE("dense 20x20 complex system matches the LU solve") {
  std::mt19937_64 rng(2);
  const Mat A = random_matrix(20, rng, 0.0, 1.0);
  const Vec b = random_vec(20, rng);
  FgmresOptions opt;
  opt.tol = 1e-13;
  opt.restart = 20;
  opt.max_iter = 20;
  const auto [x, rep] = fgmres<double>(dense_map(A), kIdentity, b, Vec::Zero(20), opt);
  const Vec exact = A.partialPivLu().solve(b);
  CHECK((x - exact).norm() / exact.norm() < 1e-8);
}

TEST_CASE("with a fixed linear preconditioner FGMRES equals standard GMRES") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat A = random_matrix(16, rng, 4.0, 0.5);
    const Mat M = random_matrix(16, rng, 1.0, 0.1).inverse();
    const Vec b = random_vec(16, rng);
    FgmresOptions opt;
    opt.tol = 0.0;
    opt.restart = 16;
    opt.max_iter = 8;
    const auto [x, rep] = fgmres<double>(dense_map(A), dense_map(M), b, Vec::Zero(16), opt);
    const auto oracle = gmres_oracle(A * M, b, 8);
    REQUIRE(rep.relative_residual_history.size() == oracle.size());
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      CHECK(std::abs(rep.relative_residual_history[k] - oracle[k]) < 1e-10);
    }
  }
}

TEST_CASE("residual history: monotone, starts at 1, agrees with the true residual") {
  std::mt19937_64 rng(4);
  const Mat A = random_matrix(60, rng, 6.0, 0.3);
  const Vec b = random_vec(60, rng);
  const Vec x0 = random_vec(60, rng);
  FgmresOptions opt;
  opt.tol = 1e-10;
  opt.restart = 5;
  opt.max_iter = 200;
  const auto [x, rep] = fgmres<double>(dense_map(A), kIdentity, b, x0, opt);
  const auto& h = rep.relative_residual_history;
  CHECK(h.front() == 1.0);
  CHECK(Index(h.size()) == rep.iterations + 1);
  for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] <= h[k - 1] * (1 + 1e-12));
  REQUIRE(rep.converged);
  CHECK(h.back() <= opt.tol);
  const double true_rel = (b - A * x).norm() / (b - A * x0).norm();
  CHECK(std::abs(true_rel - rep.final_true_residual) < 1e-12);
  CHECK(std::abs(true_rel - h.back()) < 1e-8);
  CHECK(rep.wall_time >= 0.0);
}

TEST_CASE("iteration cap and reference norm") {
  std::mt19937_64 rng(5);
  const Mat A = random_matrix(40, rng, 0.5, 1.0);
  const Vec b = random_vec(40, rng);
  FgmresOptions opt;
  opt.tol = 1e-14;
  opt.max_iter = 7;
  opt.restart = 3;
  const auto [x, rep] = fgmres<double>(dense_map(A), kIdentity, b, Vec::Zero(40), opt);
  CHECK_FALSE(rep.converged);
  CHECK(rep.iterations == 7);

  // History relative to a caller-supplied norm.
  opt.reference_norm = 2.0 * b.norm();
  const auto [x2, rep2] = fgmres<double>(dense_map(A), kIdentity, b, Vec::Zero(40), opt);
  CHECK(rep2.relative_residual_history.front() == doctest::Approx(0.5));

  // tol = 1 with the default reference: nothing to do.
  FgmresOptions loose;
  loose.tol = 1.0;
  const auto [x3, rep3] = fgmres<double>(dense_map(A), kIdentity, b, Vec::Zero(40), loose);
  CHECK(rep3.converged);
  CHECK(rep3.iterations == 0);
}

TEST_CASE("error reporting") {
  std::mt19937_64 rng(6);
  const Vec b = random_vec(10, rng);
  FgmresOptions opt;
  const LinearMap<double> zero = [](const Vec& in, Vec& out) { out = Vec::Zero(in.size()); };
  CHECK_THROWS_AS(fgmres<double>(zero, kIdentity, b, Vec::Zero(10), opt), SolverError);

  const LinearMap<double> nan = [](const Vec& in, Vec& out) {
    out = in;
    out[0] = std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(fgmres<double>(kIdentity, nan, b, Vec::Zero(10), opt), NumericalError);

  FgmresOptions bad;
  bad.restart = 0;
  CHECK_THROWS_AS(fgmres<double>(kIdentity, kIdentity, b, Vec::Zero(10), bad), SolverError);
  bad = FgmresOptions{};
  bad.tol = -1;
  CHECK_THROWS_AS(fgmres<double>(kIdentity, kIdentity, b, Vec::Zero(10), bad), SolverError);
  CHECK_THROWS_AS(fgmres<double>(kIdentity, kIdentity, b, Vec::Zero(9), opt), DimensionError);
}

TEST_CASE("a preconditioner that changes each call is handled") {
  std::mt19937_64 rng(7);
  const Mat A = random_matrix(30, rng, 3.0, 0.4);
  const Vec b = random_vec(30, rng);
  int calls = 0;
  // Alternating scalings make the preconditioner non-stationary.
  const LinearMap<double> varying = [&](const Vec& in, Vec& out) {
    out = in * (++calls % 2 ? 1.0 : 0.3);
  };
  FgmresOptions opt;
  opt.tol = 1e-10;
  opt.restart = 30;
  const auto [x, rep] = fgmres<double>(dense_map(A), varying, b, Vec::Zero(30), opt);
  CHECK(rep.converged);
  CHECK((b - A * x).norm() / b.norm() < 1e-9);
}
