#include <doctest.h>

#include <Eigen/Dense>

#include "gradcheck.hpp"
#include "helmnet/fft.hpp"
#include "helmnet/green.hpp"
#include "test_util.hpp"

using namespace helmnet;

namespace {

using C = std::complex<double>;
using Grid = ComplexGrid<double>;

Grid random_grid(Index h, Index w, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Grid g(h, w);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = {d(rng), d(rng)};
  return g;
}

Kernel3<double> random_kernel(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Kernel3<double> k;
  for (int i = 0; i < 9; ++i) k.data()[i] = {d(rng), d(rng)};
  return k;
}

Eigen::VectorXcd flat(const Grid& g) { return Eigen::Map<const Eigen::VectorXcd>(g.data(), g.size()); }

// Dense circulant with first column c (2-D, row-major flattening).
Eigen::MatrixXcd circulant(const Grid& c) {
  const Index h = c.rows(), w = c.cols(), n = h * w;
  Eigen::MatrixXcd M(n, n);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      for (Index p = 0; p < h; ++p)
        for (Index q = 0; q < w; ++q) M(i * w + j, p * w + q) = c((i - p + h) % h, (j - q + w) % w);
  return M;
}

double rel(const Grid& a, const Grid& b) { return (a - b).matrix().norm() / b.matrix().norm(); }

}  // namespace

TEST_CASE("pad_kernel_corners") {
  const Grid d = pad_kernel_corners(delta_kernel<double>(), 5, 4);
  CHECK(d(0, 0) == C(1));
  CHECK(d.abs().sum() == 1.0);

  std::mt19937_64 rng(1);
  const auto k = random_kernel(rng);
  const Grid p = pad_kernel_corners(k, 6, 7);
  CHECK(std::abs(p.sum() - k.sum()) < 1e-14);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) CHECK(p((a - 1 + 6) % 6, (b - 1 + 7) % 7) == k(a, b));
  CHECK_THROWS_AS(pad_kernel_corners(k, 2, 5), DimensionError);
}

TEST_CASE("padded Laplacian is the first column of the dense circulant Laplacian") {
  Kernel3<double> lap = Kernel3<double>::Zero();
  lap(0, 1) = lap(1, 0) = lap(1, 2) = lap(2, 1) = -1.0;
  lap(1, 1) = 4.0;
  const Grid p = pad_kernel_corners(lap, 8, 8);
  // Periodic 5-point Laplacian assembled directly.
  Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(64, 64);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) {
      const Index r = i * 8 + j;
      L(r, r) = 4.0;
      L(r, ((i + 1) % 8) * 8 + j) -= 1.0;
      L(r, ((i + 7) % 8) * 8 + j) -= 1.0;
      L(r, i * 8 + (j + 1) % 8) -= 1.0;
      L(r, i * 8 + (j + 7) % 8) -= 1.0;
    }
  CHECK((L.col(0) - flat(p)).norm() == 0.0);
}

TEST_CASE("circular_conv equals the dense circulant product") {
  std::mt19937_64 rng(2);
  const auto k = random_kernel(rng);
  const Grid x = random_grid(6, 5, rng);
  const Eigen::VectorXcd expect = circulant(pad_kernel_corners(k, 6, 5)) * flat(x);
  CHECK((flat(circular_conv(k, x)) - expect).norm() < 1e-12 * expect.norm());
  CHECK(rel(circular_conv(delta_kernel<double>(), x), x) < 1e-15);
}

TEST_CASE("Green's function of the delta kernel is a scaled delta") {
  const Grid g = green_function(delta_kernel<double>(), 8, 8);
  REQUIRE(g.rows() == 16);
  REQUIRE(g.cols() == 16);
  Grid delta = Grid::Zero(16, 16);
  delta(8, 8) = 1.0;
  CHECK((g - delta).abs().maxCoeff() < 1e-4);
  CHECK(std::abs(g(8, 8) - 1.0 / (1.0 + kGreenEpsilon)) < 1e-9);

  std::mt19937_64 rng(3);
  const Grid x = random_grid(8, 8, rng);
  CHECK((implicit_apply(x, green_spectrum(delta_kernel<double>(), 8, 8)) - x).abs().maxCoeff() < 1e-4);
}

TEST_CASE("Green's function of L + iI decays away from the source") {
  const Grid g = green_function(laplacian_plus_identity_kernel<double>(), 16, 16);
  const double center = std::abs(g(16, 16));
  double edge = 0.0;
  for (Index i = 0; i < 32; ++i) {
    edge = std::max({edge, std::abs(g(0, i)), std::abs(g(31, i)), std::abs(g(i, 0)), std::abs(g(i, 31))});
  }
  MESSAGE("|G| boundary/center ratio " << edge / center);
  CHECK(edge < 0.05 * center);
  // Monotone decay along the axis through the source.
  for (Index d = 1; d < 16; ++d) CHECK(std::abs(g(16, 16 + d)) < std::abs(g(16, 16 + d - 1)));
}

TEST_CASE("round trip: implicit_apply inverts circular_conv for L + iI") {
  const auto k = laplacian_plus_identity_kernel<double>();
  const Grid spec = green_spectrum(k, 16, 16);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    // Random content away from the periodic seam (one zero node on each side).
    Grid x = Grid::Zero(16, 16);
    x.block(1, 1, 14, 14) = random_grid(14, 14, rng);
    const double err = rel(implicit_apply(circular_conv(k, x), spec), x);
    CHECK(err < 1e-2);
  }
  // Fully random content: the wrapped stencil rows are not a free-space
  // convolution, so only an approximate inverse is expected there.
  const Grid x = random_grid(16, 16, rng);
  MESSAGE("round trip error on unbordered input " << rel(implicit_apply(circular_conv(k, x), spec), x));
}

TEST_CASE("implicit_apply is linear and equals the dense circulant of G") {
  std::mt19937_64 rng(5);
  const auto k = random_kernel(rng);
  const Grid spec = green_spectrum(k, 8, 8);
  const Grid x = random_grid(8, 8, rng), y = random_grid(8, 8, rng);
  const C a(0.4, -1.2), b(-2.0, 0.7);
  const Grid lhs = implicit_apply(Grid(a * x + b * y), spec);
  const Grid rhs = a * implicit_apply(x, spec) + b * implicit_apply(y, spec);
  CHECK(rel(lhs, rhs) < 1e-10);

  // y = crop(G (*) pad(x)): entry (i, j) = sum_pq G(i + h - p, j + w - q) x(p, q).
  const Grid G = green_function(k, 8, 8);
  const Grid out = implicit_apply(x, spec);
  Grid expect = Grid::Zero(8, 8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j)
      for (Index p = 0; p < 8; ++p)
        for (Index q = 0; q < 8; ++q) expect(i, j) += G(i + 8 - p, j + 8 - q) * x(p, q);
  CHECK(rel(out, expect) < 1e-10);

  // Shifting the source shifts the response.
  Grid d1 = Grid::Zero(8, 8), d2 = Grid::Zero(8, 8);
  d1(2, 3) = 1.0;
  d2(4, 4) = 1.0;
  const Grid r1 = implicit_apply(d1, spec), r2 = implicit_apply(d2, spec);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 7; ++j) CHECK(std::abs(r1(i, j) - r2(i + 2, j + 1)) < 1e-12);

  CHECK_THROWS_AS(implicit_apply(Grid(random_grid(7, 8, rng)), spec), DimensionError);
}

TEST_CASE("green_spectrum_vjp matches central differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    const auto k = trial == 0 ? laplacian_plus_identity_kernel<double>() : random_kernel(rng);
    const Index h = 6, w = 5;
    const Grid W = random_grid(2 * h, 2 * w, rng);
    auto loss = [&](const Kernel3<double>& kk) {
      const Grid s = green_spectrum(kk, h, w);
      return (W.conjugate() * s).real().sum();
    };
    const Kernel3<double> g = green_spectrum_vjp(k, h, w, W);
    const double step = 1e-4;
    double num2 = 0, diff2 = 0;
    for (int i = 0; i < 9; ++i)
      for (C dir : {C(1, 0), C(0, 1)}) {
        Kernel3<double> kp = k, km = k;
        kp.data()[i] += step * dir;
        km.data()[i] -= step * dir;
        const double numeric = (loss(kp) - loss(km)) / (2 * step);
        const double analytic = dir.real() != 0 ? g.data()[i].real() : g.data()[i].imag();
        num2 += numeric * numeric;
        diff2 += (numeric - analytic) * (numeric - analytic);
      }
    CHECK(std::sqrt(diff2 / num2) < 1e-3);
  }
}

TEST_CASE("ImplicitKernel cache") {
  const auto w0 = ImplicitKernel<double>::initial_weights(3);
  CHECK(w0.shape() == nn::Shape{3, 2, 3, 3});
  const auto k0 = ImplicitKernel<double>::kernel(w0, 1);
  CHECK((k0 - laplacian_plus_identity_kernel<double>()).norm() == 0.0);

  ImplicitKernel<double> cache;
  const auto s1 = cache.spectra(w0, 8, 8);  // copy
  const auto& s2 = cache.spectra(w0, 8, 8);
  REQUIRE(s1.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) CHECK((s1[c] - s2[c]).abs().maxCoeff() == 0.0);
  CHECK(s2[0].rows() == 16);

  // New size or new weights recompute.
  CHECK(cache.spectra(w0, 4, 6)[0].cols() == 12);
  auto w1 = w0;
  w1.data()[0] += 0.5;
  const auto s3 = cache.spectra(w1, 8, 8);
  CHECK((s3[0] - s1[0]).abs().maxCoeff() > 0.0);
  CHECK((s3[1] - s1[1]).abs().maxCoeff() == 0.0);
  CHECK((s3[0] - green_spectrum(ImplicitKernel<double>::kernel(w1, 0), 8, 8)).abs().maxCoeff() == 0.0);
}

TEST_CASE("implicit_layer: forward matches per-channel implicit_apply, gradients check") {
  std::mt19937_64 rng(7);
  const Index C2 = 4, h = 6, w = 6;
  auto x = test::random_tensor<double>(nn::Shape{2, C2, h, w}, rng);
  auto weights = ImplicitKernel<double>::initial_weights(C2 / 2);
  weights.array() += test::random_tensor<double>(weights.shape(), rng, 0.2).array();
  ImplicitKernel<double> cache;

  nn::Tape<double> tape(false);
  const auto y = nn::implicit_layer(tape.constant(x), tape.constant(weights), cache);
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < C2 / 2; ++c) {
      Grid xc(h, w);
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) xc(i, j) = {x(n, 2 * c, i, j), x(n, 2 * c + 1, i, j)};
      const Grid expect = implicit_apply(xc, green_spectrum(ImplicitKernel<double>::kernel(weights, c), h, w));
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
          CHECK(std::abs(y.value()(n, 2 * c, i, j) - expect(i, j).real()) < 1e-12);
          CHECK(std::abs(y.value()(n, 2 * c + 1, i, j) - expect(i, j).imag()) < 1e-12);
        }
    }

  ImplicitKernel<double> gc_cache;
  const test::GradFn<double> f = [&](nn::Tape<double>&, std::vector<nn::Var<double>>& v) {
    return nn::implicit_layer(v[0], v[1], gc_cache);
  };
  CHECK(test::gradcheck<double>({x, weights}, f, 1e-5, 1) < 1e-4);

  ImplicitKernel<float> fcache;
  const test::GradFn<float> ff = [&](nn::Tape<float>&, std::vector<nn::Var<float>>& v) {
    return nn::implicit_layer(v[0], v[1], fcache);
  };
  CHECK(test::gradcheck<float>({x.cast<float>(), weights.cast<float>()}, ff, 1e-2, 2) < 1e-2);

  nn::Tape<double> bad(false);
  CHECK_THROWS_AS(nn::implicit_layer(bad.constant(test::random_tensor<double>(nn::Shape{1, 3, h, w}, rng)),
                                     bad.constant(weights), cache),
                  DimensionError);
}

TEST_CASE("fft2 and ifft2 are inverse and match the DFT definition") {
  std::mt19937_64 rng(8);
  const Grid x = random_grid(6, 10, rng);
  CHECK(rel(ifft2(fft2(x)), x) < 1e-14);
  const Grid X = fft2(x);
  C direct = 0;
  for (Index p = 0; p < 6; ++p)
    for (Index q = 0; q < 10; ++q)
      direct += x(p, q) * std::exp(C(0, -2 * M_PI * (2.0 * double(p) / 6 + 3.0 * double(q) / 10)));
  CHECK(std::abs(X(2, 3) - direct) < 1e-12);
}
