#include "helmnet/green.hpp"

#include <string>

namespace helmnet {

namespace {

void check_size(Index h, Index w, const char* who) {
  if (h < 3 || w < 3) {
    throw DimensionError(std::string(who) + ": size " + std::to_string(h) + "x" +
                         std::to_string(w) + " is below 3x3");
  }
}

Index wrap(Index i, Index n) { return ((i % n) + n) % n; }

// FFT of a unit source at (3h, 3w) on the 6h x 6w division grid, one per size.
template <typename Scalar>
const ComplexGrid<Scalar>& source_spectrum(Index h, Index w) {
  static std::mutex mutex;
  static std::map<std::pair<Index, Index>, ComplexGrid<Scalar>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find({h, w});
  if (it == cache.end()) {
    ComplexGrid<Scalar> d = ComplexGrid<Scalar>::Zero(6 * h, 6 * w);
    d(3 * h, 3 * w) = Scalar(1);
    fft2_inplace(d);
    it = cache.emplace(std::make_pair(h, w), std::move(d)).first;
  }
  return it->second;
}

}  // namespace

template <typename Scalar>
ComplexGrid<Scalar> pad_kernel_corners(const Kernel3<Scalar>& k, Index h, Index w) {
  check_size(h, w, "pad_kernel_corners");
  ComplexGrid<Scalar> out = ComplexGrid<Scalar>::Zero(h, w);
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) out(wrap(a - 1, h), wrap(b - 1, w)) += k(a, b);
  return out;
}

template <typename Scalar>
ComplexGrid<Scalar> circular_conv(const Kernel3<Scalar>& k, const ComplexGrid<Scalar>& x) {
  const Index h = x.rows(), w = x.cols();
  check_size(h, w, "circular_conv");
  ComplexGrid<Scalar> y = ComplexGrid<Scalar>::Zero(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      for (Index a = 0; a < 3; ++a)
        for (Index b = 0; b < 3; ++b) y(i, j) += k(a, b) * x(wrap(i - a + 1, h), wrap(j - b + 1, w));
  return y;
}

template <typename Scalar>
ComplexGrid<Scalar> green_function(const Kernel3<Scalar>& k, Index h, Index w, double eps) {
  check_size(h, w, "green_function");
  ComplexGrid<Scalar> kf = fft2(pad_kernel_corners(k, 6 * h, 6 * w));
  const ComplexGrid<Scalar>& d = source_spectrum<Scalar>(h, w);
  const Scalar e = Scalar(eps);
  ComplexGrid<Scalar> s = kf.conjugate() / (kf.abs2() + e) * d;
  ifft2_inplace(s);
  return s.block(2 * h, 2 * w, 2 * h, 2 * w);
}

template <typename Scalar>
ComplexGrid<Scalar> green_spectrum(const Kernel3<Scalar>& k, Index h, Index w, double eps) {
  return fft2(green_function(k, h, w, eps));
}

template <typename Scalar>
Kernel3<Scalar> green_spectrum_vjp(const Kernel3<Scalar>& k, Index h, Index w,
                                   const ComplexGrid<Scalar>& grad_spectrum, double eps) {
  using C = std::complex<Scalar>;
  check_size(h, w, "green_spectrum_vjp");
  if (grad_spectrum.rows() != 2 * h || grad_spectrum.cols() != 2 * w) {
    throw DimensionError("green_spectrum_vjp: gradient has the wrong size");
  }
  const Index H = 6 * h, W = 6 * w;
  const ComplexGrid<Scalar> kf = fft2(pad_kernel_corners(k, H, W));
  const ComplexGrid<Scalar>& d = source_spectrum<Scalar>(h, w);

  // Adjoint of the unnormalized FFT on the crop: N * IFFT.
  ComplexGrid<Scalar> g_crop = ifft2(grad_spectrum) * Scalar(4 * h * w);
  ComplexGrid<Scalar> g_big = ComplexGrid<Scalar>::Zero(H, W);
  g_big.block(2 * h, 2 * w, 2 * h, 2 * w) = g_crop;
  // Adjoint of IFFT: FFT / N.
  fft2_inplace(g_big);
  g_big /= Scalar(H * W);
  const ComplexGrid<Scalar> g_s = g_big * d.conjugate();

  ComplexGrid<Scalar> g_kf(H, W);
  const Scalar e = Scalar(eps);
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      const Scalar a = kf(i, j).real(), b = kf(i, j).imag();
      const Scalar q = a * a + b * b + e;
      const Scalar q2 = q * q;
      const Scalar gr = g_s(i, j).real(), gi = g_s(i, j).imag();
      const Scalar ga = gr * (Scalar(1) / q - Scalar(2) * a * a / q2) + gi * (Scalar(2) * a * b / q2);
      const Scalar gb = gr * (-Scalar(2) * a * b / q2) + gi * (-Scalar(1) / q + Scalar(2) * b * b / q2);
      g_kf(i, j) = C(ga, gb);
    }
  }
  // Adjoint of the forward FFT: N * IFFT.
  ComplexGrid<Scalar> g_pad = ifft2(g_kf) * Scalar(H * W);
  Kernel3<Scalar> gk;
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) gk(a, b) = g_pad(wrap(a - 1, H), wrap(b - 1, W));
  return gk;
}

template <typename Scalar>
ComplexGrid<Scalar> implicit_apply(const ComplexGrid<Scalar>& x, const ComplexGrid<Scalar>& spec) {
  const Index h = x.rows(), w = x.cols();
  if (spec.rows() != 2 * h || spec.cols() != 2 * w) {
    throw DimensionError("implicit_apply: spectrum " + std::to_string(spec.rows()) + "x" +
                         std::to_string(spec.cols()) + " does not match input " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  ComplexGrid<Scalar> pad = ComplexGrid<Scalar>::Zero(2 * h, 2 * w);
  pad.topLeftCorner(h, w) = x;
  fft2_inplace(pad);
  pad *= spec;
  ifft2_inplace(pad);
  return pad.block(h, w, h, w);
}

template <typename Scalar>
nn::Tensor<Scalar> ImplicitKernel<Scalar>::initial_weights(Index channels) {
  const Kernel3<Scalar> k0 = laplacian_plus_identity_kernel<Scalar>();
  nn::Tensor<Scalar> t(nn::Shape{channels, 2, 3, 3});
  for (Index c = 0; c < channels; ++c)
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) {
        t(c, 0, a, b) = k0(a, b).real();
        t(c, 1, a, b) = k0(a, b).imag();
      }
  return t;
}

template <typename Scalar>
Kernel3<Scalar> ImplicitKernel<Scalar>::kernel(const nn::Tensor<Scalar>& weights, Index c) {
  Kernel3<Scalar> k;
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) k(a, b) = {weights(c, 0, a, b), weights(c, 1, a, b)};
  return k;
}

template <typename Scalar>
const typename ImplicitKernel<Scalar>::Spectra& ImplicitKernel<Scalar>::spectra(
    const nn::Tensor<Scalar>& weights, Index h, Index w) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const bool same = h == cached_h_ && w == cached_w_ && weights.shape() == cached_weights_.shape() &&
                    (weights.array() == cached_weights_.array()).all();
  if (!same) {
    Spectra s;
    for (Index c = 0; c < weights.shape().n; ++c) s.push_back(green_spectrum(kernel(weights, c), h, w));
    cached_ = std::move(s);
    cached_weights_ = weights;
    cached_h_ = h;
    cached_w_ = w;
  }
  return cached_;
}

template <typename Scalar>
void ImplicitKernel<Scalar>::invalidate() const {
  std::lock_guard<std::mutex> lock(mutex_);
  cached_h_ = cached_w_ = -1;
  cached_.clear();
}

namespace nn {

template <typename Scalar>
Var<Scalar> implicit_layer(Var<Scalar> x, Var<Scalar> weights, const ImplicitKernel<Scalar>& cache) {
  using C = std::complex<Scalar>;
  const Shape s = x.shape();
  const Shape ws = weights.shape();
  if (ws.c != 2 || ws.h != 3 || ws.w != 3 || s.c != 2 * ws.n) {
    throw DimensionError("implicit_layer: input " + s.str() + " does not pair with kernel " +
                         ws.str());
  }
  const Index nc = ws.n, h = s.h, w = s.w;
  const auto spectra = cache.spectra(weights.value(), h, w);
  Tensor<Scalar> y(s);
  ComplexGrid<Scalar> z(h, w);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < nc; ++c) {
      const Scalar* re = x.value().plane_ptr(n, 2 * c);
      const Scalar* im = x.value().plane_ptr(n, 2 * c + 1);
      for (Index i = 0; i < h * w; ++i) z.data()[i] = C(re[i], im[i]);
      const ComplexGrid<Scalar> out = implicit_apply(z, spectra[std::size_t(c)]);
      Scalar* ore = y.plane_ptr(n, 2 * c);
      Scalar* oim = y.plane_ptr(n, 2 * c + 1);
      for (Index i = 0; i < h * w; ++i) {
        ore[i] = out.data()[i].real();
        oim[i] = out.data()[i].imag();
      }
    }
  }

  const int xi = x.id, wi = weights.id;
  auto back = [xi, wi, s, nc, h, w, spectra](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    const bool need_x = t.requires_grad(xi), need_w = t.requires_grad(wi);
    const Scalar n2 = Scalar(4 * h * w);
    std::vector<ComplexGrid<Scalar>> g_spec;
    if (need_w) g_spec.assign(std::size_t(nc), ComplexGrid<Scalar>::Zero(2 * h, 2 * w));
    ComplexGrid<Scalar> buf(2 * h, 2 * w), xs(2 * h, 2 * w);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < nc; ++c) {
        const ComplexGrid<Scalar>& G = spectra[std::size_t(c)];
        // g_Y = FFT(crop^T g_y) / N
        buf.setZero();
        const Scalar* gre = gy.plane_ptr(n, 2 * c);
        const Scalar* gim = gy.plane_ptr(n, 2 * c + 1);
        for (Index i = 0; i < h; ++i)
          for (Index j = 0; j < w; ++j) buf(h + i, w + j) = C(gre[i * w + j], gim[i * w + j]);
        fft2_inplace(buf);
        buf /= n2;
        if (need_w) {
          xs.setZero();
          const Scalar* re = t.value(xi).plane_ptr(n, 2 * c);
          const Scalar* im = t.value(xi).plane_ptr(n, 2 * c + 1);
          for (Index i = 0; i < h; ++i)
            for (Index j = 0; j < w; ++j) xs(i, j) = C(re[i * w + j], im[i * w + j]);
          fft2_inplace(xs);
          g_spec[std::size_t(c)] += xs.conjugate() * buf;
        }
        if (need_x) {
          // g_x = crop(N * IFFT(conj(G) g_Y))
          ComplexGrid<Scalar> gx = ifft2(ComplexGrid<Scalar>(G.conjugate() * buf)) * n2;
          Scalar* xre = t.grad(xi).plane_ptr(n, 2 * c);
          Scalar* xim = t.grad(xi).plane_ptr(n, 2 * c + 1);
          for (Index i = 0; i < h; ++i)
            for (Index j = 0; j < w; ++j) {
              xre[i * w + j] += gx(i, j).real();
              xim[i * w + j] += gx(i, j).imag();
            }
        }
      }
    }
    if (need_w) {
      Tensor<Scalar>& gw = t.grad(wi);
      for (Index c = 0; c < nc; ++c) {
        const Kernel3<Scalar> gk = green_spectrum_vjp(ImplicitKernel<Scalar>::kernel(t.value(wi), c), h,
                                                      w, g_spec[std::size_t(c)]);
        for (Index a = 0; a < 3; ++a)
          for (Index b = 0; b < 3; ++b) {
            gw(c, 0, a, b) += gk(a, b).real();
            gw(c, 1, a, b) += gk(a, b).imag();
          }
      }
    }
  };
  return x.tape->record(std::move(y), {x, weights}, back);
}

}  // namespace nn

#define HELMNET_INSTANTIATE_GREEN(S)                                                               \
  template ComplexGrid<S> pad_kernel_corners(const Kernel3<S>&, Index, Index);                     \
  template ComplexGrid<S> circular_conv(const Kernel3<S>&, const ComplexGrid<S>&);                 \
  template ComplexGrid<S> green_function(const Kernel3<S>&, Index, Index, double);                 \
  template ComplexGrid<S> green_spectrum(const Kernel3<S>&, Index, Index, double);                 \
  template Kernel3<S> green_spectrum_vjp(const Kernel3<S>&, Index, Index, const ComplexGrid<S>&,   \
                                         double);                                                  \
  template ComplexGrid<S> implicit_apply(const ComplexGrid<S>&, const ComplexGrid<S>&);            \
  template class ImplicitKernel<S>;                                                                \
  template nn::Var<S> nn::implicit_layer(nn::Var<S>, nn::Var<S>, const ImplicitKernel<S>&);

HELMNET_INSTANTIATE_GREEN(float)
HELMNET_INSTANTIATE_GREEN(double)

}  // namespace helmnet
