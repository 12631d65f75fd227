#include "helmnet/neural/layers.hpp"

#include <algorithm>
#include <cmath>

namespace helmnet::nn {

namespace {

template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

struct Geometry {
  Index n, cin, ih, iw, k, stride, pad, oh, ow;
  Index kdim() const { return cin * k * k; }
  Index cols() const { return n * oh * ow; }
};

// cols[(ci, ky, kx), (n, oy, ox)] = x[n, ci, oy*s - p + ky, ox*s - p + kx]
template <typename Scalar>
void im2col(const Scalar* x, const Geometry& g, Scalar* cols) {
  const Index ncols = g.cols();
  const Index opl = g.oh * g.ow;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        Scalar* row = cols + ((ci * g.k + ky) * g.k + kx) * ncols;
        for (Index n = 0; n < g.n; ++n) {
          const Scalar* plane = x + (n * g.cin + ci) * g.ih * g.iw;
          Scalar* dst = row + n * opl;
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            Scalar* d = dst + oy * g.ow;
            if (iy < 0 || iy >= g.ih) {
              std::fill(d, d + g.ow, Scalar(0));
              continue;
            }
            const Scalar* src = plane + iy * g.iw;
            if (g.stride == 1) {
              for (Index ox = 0; ox < g.ow; ++ox) {
                const Index ix = ox - g.pad + kx;
                d[ox] = (ix >= 0 && ix < g.iw) ? src[ix] : Scalar(0);
              }
            } else {
              for (Index ox = 0; ox < g.ow; ++ox) {
                const Index ix = ox * g.stride - g.pad + kx;
                d[ox] = (ix >= 0 && ix < g.iw) ? src[ix] : Scalar(0);
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into x.
template <typename Scalar>
void col2im(const Scalar* cols, const Geometry& g, Scalar* x) {
  const Index ncols = g.cols();
  const Index opl = g.oh * g.ow;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const Scalar* row = cols + ((ci * g.k + ky) * g.k + kx) * ncols;
        for (Index n = 0; n < g.n; ++n) {
          Scalar* plane = x + (n * g.cin + ci) * g.ih * g.iw;
          const Scalar* src = row + n * opl;
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.ih) continue;
            Scalar* dst = plane + iy * g.iw;
            const Scalar* s = src + oy * g.ow;
            for (Index ox = 0; ox < g.ow; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.iw) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

// (n, c, hw) tensor layout <-> (c, n*hw) matrix layout.
template <typename Scalar>
void nchw_to_cm(const Scalar* t, Index n, Index c, Index hw, Scalar* m) {
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic)
      std::copy_n(t + (in * c + ic) * hw, hw, m + ic * n * hw + in * hw);
}
template <typename Scalar>
void cm_to_nchw(const Scalar* m, Index n, Index c, Index hw, Scalar* t) {
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic)
      std::copy_n(m + ic * n * hw + in * hw, hw, t + (in * c + ic) * hw);
}
template <typename Scalar>
void cm_add_to_nchw(const Scalar* m, Index n, Index c, Index hw, Scalar* t) {
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic) {
      const Scalar* s = m + ic * n * hw + in * hw;
      Scalar* d = t + (in * c + ic) * hw;
      for (Index i = 0; i < hw; ++i) d[i] += s[i];
    }
}

template <typename Scalar>
void add_bias(Tensor<Scalar>& y, const Tensor<Scalar>& b) {
  const Shape s = y.shape();
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) y.plane(n, c) += b.data()[c];
}

template <typename Scalar>
void bias_grad(const Tensor<Scalar>& gy, Tensor<Scalar>& gb) {
  const Shape s = gy.shape();
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      gb.data()[c] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gy.plane_ptr(n, c),
                                                                               s.plane())
                          .sum();
}

template <typename Scalar>
void depthwise_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, ConvSpec spec,
                       Tensor<Scalar>& y) {
  const Shape xs = x.shape(), ys = y.shape();
  const Index k = w.shape().h;
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* in = x.plane_ptr(n, c);
      Scalar* out = y.plane_ptr(n, c);
      const Scalar* wk = w.plane_ptr(c, 0);
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const Scalar wv = wk[ky * k + kx];
          for (Index oy = 0; oy < ys.h; ++oy) {
            const Index iy = oy * spec.stride - spec.pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            const Scalar* src = in + iy * xs.w;
            Scalar* dst = out + oy * ys.w;
            for (Index ox = 0; ox < ys.w; ++ox) {
              const Index ix = ox * spec.stride - spec.pad + kx;
              if (ix >= 0 && ix < xs.w) dst[ox] += wv * src[ix];
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void depthwise_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, ConvSpec spec,
                        const Tensor<Scalar>& gy, Tensor<Scalar>* gx, Tensor<Scalar>* gw) {
  const Shape xs = x.shape(), ys = gy.shape();
  const Index k = w.shape().h;
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* in = x.plane_ptr(n, c);
      const Scalar* go = gy.plane_ptr(n, c);
      const Scalar* wk = w.plane_ptr(c, 0);
      Scalar* gi = gx ? gx->plane_ptr(n, c) : nullptr;
      Scalar* gwk = gw ? gw->plane_ptr(c, 0) : nullptr;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const Scalar wv = wk[ky * k + kx];
          Scalar acc = 0;
          for (Index oy = 0; oy < ys.h; ++oy) {
            const Index iy = oy * spec.stride - spec.pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            const Scalar* src = in + iy * xs.w;
            const Scalar* g = go + oy * ys.w;
            Scalar* gdst = gi ? gi + iy * xs.w : nullptr;
            for (Index ox = 0; ox < ys.w; ++ox) {
              const Index ix = ox * spec.stride - spec.pad + kx;
              if (ix < 0 || ix >= xs.w) continue;
              acc += g[ox] * src[ix];
              if (gdst) gdst[ix] += wv * g[ox];
            }
          }
          if (gwk) gwk[ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, const Var<Scalar>* bias, ConvSpec spec) {
  Tape<Scalar>& tape = *x.tape;
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (ws.h != ws.w) throw DimensionError("conv2d: kernel must be square");
  const Index k = ws.h;
  const Index oh = conv_out_size(xs.h, k, spec.stride, spec.pad);
  const Index ow = conv_out_size(xs.w, k, spec.stride, spec.pad);
  if (oh < 1 || ow < 1) throw DimensionError("conv2d: input " + xs.str() + " too small");
  const Index cout = spec.depthwise ? xs.c : ws.n;
  if (spec.depthwise ? (ws.n != xs.c || ws.c != 1) : (ws.c != xs.c)) {
    throw DimensionError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (bias && bias->shape().numel() != cout) throw DimensionError("conv2d: bias size mismatch");

  Tensor<Scalar> y(Shape{xs.n, cout, oh, ow});
  const Geometry g{xs.n, xs.c, xs.h, xs.w, k, spec.stride, spec.pad, oh, ow};
  if (spec.depthwise) {
    depthwise_forward(x.value(), w.value(), spec, y);
  } else {
    RowMatrix<Scalar> cols(g.kdim(), g.cols());
    im2col(x.value().data(), g, cols.data());
    ConstMatMap<Scalar> W(w.value().data(), cout, g.kdim());
    RowMatrix<Scalar> out = W * cols;
    cm_to_nchw(out.data(), xs.n, cout, oh * ow, y.data());
  }
  if (bias) add_bias(y, bias->value());

  const int xi = x.id, wi = w.id, bi = bias ? bias->id : -1;
  auto back = [xi, wi, bi, g, spec, cout](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    const Tensor<Scalar>& xv = t.value(xi);
    const Tensor<Scalar>& wv = t.value(wi);
    if (bi >= 0 && t.requires_grad(bi)) bias_grad(gy, t.grad(bi));
    if (spec.depthwise) {
      depthwise_backward(xv, wv, spec, gy, t.requires_grad(xi) ? &t.grad(xi) : nullptr,
                         t.requires_grad(wi) ? &t.grad(wi) : nullptr);
      return;
    }
    RowMatrix<Scalar> gout(cout, g.cols());
    nchw_to_cm(gy.data(), g.n, cout, g.oh * g.ow, gout.data());
    if (t.requires_grad(wi)) {
      RowMatrix<Scalar> cols(g.kdim(), g.cols());
      im2col(xv.data(), g, cols.data());
      MatMap<Scalar>(t.grad(wi).data(), cout, g.kdim()).noalias() += gout * cols.transpose();
    }
    if (t.requires_grad(xi)) {
      ConstMatMap<Scalar> W(wv.data(), cout, g.kdim());
      RowMatrix<Scalar> gcols = W.transpose() * gout;
      col2im(gcols.data(), g, t.grad(xi).data());
    }
  };
  if (bias) return tape.record(std::move(y), {x, w, *bias}, back);
  return tape.record(std::move(y), {x, w}, back);
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(Var<Scalar> x, Var<Scalar> w, const Var<Scalar>* bias, ConvSpec spec,
                             Index out_h, Index out_w) {
  Tape<Scalar>& tape = *x.tape;
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (spec.depthwise) throw DimensionError("conv_transpose2d: depthwise not supported");
  if (ws.h != ws.w || ws.n != xs.c) {
    throw DimensionError("conv_transpose2d: weight " + ws.str() + " incompatible with input " +
                         xs.str());
  }
  const Index k = ws.h;
  const Index cout = ws.c;
  if (conv_out_size(out_h, k, spec.stride, spec.pad) != xs.h ||
      conv_out_size(out_w, k, spec.stride, spec.pad) != xs.w) {
    throw DimensionError("conv_transpose2d: output " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " inconsistent with input " + xs.str());
  }
  if (bias && bias->shape().numel() != cout) {
    throw DimensionError("conv_transpose2d: bias size mismatch");
  }
  // Geometry of the forward convolution that this op is the adjoint of.
  const Geometry g{xs.n, cout, out_h, out_w, k, spec.stride, spec.pad, xs.h, xs.w};
  Tensor<Scalar> y(Shape{xs.n, cout, out_h, out_w});
  {
    RowMatrix<Scalar> xm(xs.c, g.cols());
    nchw_to_cm(x.value().data(), xs.n, xs.c, xs.h * xs.w, xm.data());
    ConstMatMap<Scalar> W(w.value().data(), xs.c, g.kdim());
    RowMatrix<Scalar> cols = W.transpose() * xm;
    col2im(cols.data(), g, y.data());
  }
  if (bias) add_bias(y, bias->value());

  const Index cin = xs.c;
  const int xi = x.id, wi = w.id, bi = bias ? bias->id : -1;
  auto back = [xi, wi, bi, g, cin](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    if (bi >= 0 && t.requires_grad(bi)) bias_grad(gy, t.grad(bi));
    RowMatrix<Scalar> gcols(g.kdim(), g.cols());
    im2col(gy.data(), g, gcols.data());
    if (t.requires_grad(xi)) {
      ConstMatMap<Scalar> W(t.value(wi).data(), cin, g.kdim());
      RowMatrix<Scalar> gxm = W * gcols;
      cm_add_to_nchw(gxm.data(), g.n, cin, g.oh * g.ow, t.grad(xi).data());
    }
    if (t.requires_grad(wi)) {
      RowMatrix<Scalar> xm(cin, g.cols());
      nchw_to_cm(t.value(xi).data(), g.n, cin, g.oh * g.ow, xm.data());
      MatMap<Scalar>(t.grad(wi).data(), cin, g.kdim()).noalias() += xm * gcols.transpose();
    }
  };
  if (bias) return tape.record(std::move(y), {x, w, *bias}, back);
  return tape.record(std::move(y), {x, w}, back);
}

template <typename Scalar>
Var<Scalar> batchnorm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormStats<Scalar> stats,
                      bool training) {
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Tape<Scalar>& tape = *x.tape;
  const Shape s = x.shape();
  if (gamma.shape().numel() != s.c || beta.shape().numel() != s.c) {
    throw DimensionError("batchnorm: parameter size does not match channels of " + s.str());
  }
  const Scalar eps = Scalar(kBatchNormEps);
  const Index m = s.n * s.plane();
  Arr mean(s.c), inv_std(s.c);
  const Tensor<Scalar>& xv = x.value();
  if (training) {
    for (Index c = 0; c < s.c; ++c) {
      double sum = 0;
      for (Index n = 0; n < s.n; ++n) {
        const Scalar* p = xv.plane_ptr(n, c);
        for (Index i = 0; i < s.plane(); ++i) sum += p[i];
      }
      const double mu = sum / double(m);
      double ss = 0;
      for (Index n = 0; n < s.n; ++n) {
        const Scalar* p = xv.plane_ptr(n, c);
        for (Index i = 0; i < s.plane(); ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / double(m);
      mean[c] = Scalar(mu);
      inv_std[c] = Scalar(1.0 / std::sqrt(var + double(eps)));
      if (stats.mean && stats.var) {
        const Scalar mom = Scalar(kBatchNormMomentum);
        const double unbiased = m > 1 ? ss / double(m - 1) : var;
        stats.mean->data()[c] = (Scalar(1) - mom) * stats.mean->data()[c] + mom * Scalar(mu);
        stats.var->data()[c] = (Scalar(1) - mom) * stats.var->data()[c] + mom * Scalar(unbiased);
      }
    }
  } else {
    if (!stats.mean || !stats.var) throw DimensionError("batchnorm: inference needs running stats");
    mean = stats.mean->array();
    inv_std = (stats.var->array() + eps).rsqrt();
  }
  Tensor<Scalar> y(s);
  const Scalar* gm = gamma.value().data();
  const Scalar* bt = beta.value().data();
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      const Scalar a = gm[c] * inv_std[c];
      const Scalar b = bt[c] - a * mean[c];
      const Scalar* p = xv.plane_ptr(n, c);
      Scalar* q = y.plane_ptr(n, c);
      for (Index i = 0; i < s.plane(); ++i) q[i] = a * p[i] + b;
    }

  const int xi = x.id, gi = gamma.id, bi = beta.id;
  auto back = [xi, gi, bi, s, m, mean, inv_std, training](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    const Tensor<Scalar>& xv = t.value(xi);
    const Scalar* gm = t.value(gi).data();
    for (Index c = 0; c < s.c; ++c) {
      double sum_g = 0, sum_gx = 0;
      for (Index n = 0; n < s.n; ++n) {
        const Scalar* g = gy.plane_ptr(n, c);
        const Scalar* p = xv.plane_ptr(n, c);
        for (Index i = 0; i < s.plane(); ++i) {
          sum_g += g[i];
          sum_gx += g[i] * (p[i] - mean[c]) * inv_std[c];
        }
      }
      if (t.requires_grad(gi)) t.grad(gi).data()[c] += Scalar(sum_gx);
      if (t.requires_grad(bi)) t.grad(bi).data()[c] += Scalar(sum_g);
      if (!t.requires_grad(xi)) continue;
      Tensor<Scalar>& gx = t.grad(xi);
      const Scalar a = gm[c] * inv_std[c];
      if (training) {
        const Scalar mg = Scalar(sum_g / double(m));
        const Scalar mgx = Scalar(sum_gx / double(m));
        for (Index n = 0; n < s.n; ++n) {
          const Scalar* g = gy.plane_ptr(n, c);
          const Scalar* p = xv.plane_ptr(n, c);
          Scalar* q = gx.plane_ptr(n, c);
          for (Index i = 0; i < s.plane(); ++i) {
            const Scalar xh = (p[i] - mean[c]) * inv_std[c];
            q[i] += a * (g[i] - mg - xh * mgx);
          }
        }
      } else {
        for (Index n = 0; n < s.n; ++n) {
          const Scalar* g = gy.plane_ptr(n, c);
          Scalar* q = gx.plane_ptr(n, c);
          for (Index i = 0; i < s.plane(); ++i) q[i] += a * g[i];
        }
      }
    }
  };
  return tape.record(std::move(y), {x, gamma, beta}, back);
}

template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> x) {
  const auto& a = x.value().array();
  Tensor<Scalar> y(x.shape(), (-a.abs()).exp().log1p() + a.max(Scalar(0)));
  const int xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi](Tape<Scalar>& t, int self) {
    const auto& a = t.value(xi).array();
    t.grad(xi).array() += t.grad(self).array() / (Scalar(1) + (-a).exp());
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError("add: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
  Tensor<Scalar> y(a.shape(), a.value().array() + b.value().array());
  const int ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape<Scalar>& t, int self) {
    if (t.requires_grad(ai)) t.grad(ai).array() += t.grad(self).array();
    if (t.requires_grad(bi)) t.grad(bi).array() += t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Tensor<Scalar> y(a.shape(), a.value().array() * s);
  const int ai = a.id;
  return a.tape->record(std::move(y), {a}, [ai, s](Tape<Scalar>& t, int self) {
    t.grad(ai).array() += s * t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> repeat_batch(Var<Scalar> x, Index times) {
  if (times < 1) throw DimensionError("repeat_batch: times must be positive");
  const Shape s = x.shape();
  if (times == 1) return x;
  const Index per = s.c * s.plane();
  Tensor<Scalar> y(Shape{s.n * times, s.c, s.h, s.w});
  for (Index n = 0; n < s.n; ++n)
    for (Index r = 0; r < times; ++r)
      std::copy_n(x.value().data() + n * per, per, y.data() + (n * times + r) * per);
  const int xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, s, times, per](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    Tensor<Scalar>& gx = t.grad(xi);
    for (Index n = 0; n < s.n; ++n)
      for (Index r = 0; r < times; ++r) {
        const Scalar* src = gy.data() + (n * times + r) * per;
        Scalar* dst = gx.data() + n * per;
        for (Index i = 0; i < per; ++i) dst[i] += src[i];
      }
  });
}

template <typename Scalar>
RowMatrix<Scalar> resample_matrix(Index in, Index out) {
  if (out == 2 * in - 1 || out == 2 * in) {
    RowMatrix<Scalar> P = RowMatrix<Scalar>::Zero(out, in);
    if (out == 2 * in - 1) {
      for (Index j = 0; j < out; ++j) {
        if (j % 2 == 0) {
          P(j, j / 2) = 1;
        } else {
          P(j, j / 2) = Scalar(0.5);
          P(j, j / 2 + 1) = Scalar(0.5);
        }
      }
    } else {
      for (Index j = 0; j < out; ++j) {
        const double src = std::clamp(0.5 * double(j) - 0.25, 0.0, double(in - 1));
        const Index i0 = std::min<Index>(Index(std::floor(src)), in - 1);
        const Index i1 = std::min<Index>(i0 + 1, in - 1);
        const double t = src - double(i0);
        P(j, i0) += Scalar(1.0 - t);
        P(j, i1) += Scalar(t);
      }
    }
    return P;
  }
  if (in == 2 * out - 1 || in == 2 * out) {
    RowMatrix<Scalar> R = resample_matrix<Scalar>(out, in).transpose();
    for (Index i = 0; i < R.rows(); ++i) R.row(i) /= R.row(i).sum();
    return R;
  }
  throw DimensionError("resample_matrix: " + std::to_string(in) + " -> " + std::to_string(out) +
                       " is not a factor-2 resampling");
}

template <typename Scalar>
Var<Scalar> bilinear_resample(Var<Scalar> x, Index out_h, Index out_w) {
  const Shape s = x.shape();
  const RowMatrix<Scalar> Py = resample_matrix<Scalar>(s.h, out_h);
  const RowMatrix<Scalar> Px = resample_matrix<Scalar>(s.w, out_w);
  Tensor<Scalar> y(Shape{s.n, s.c, out_h, out_w});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      ConstMatMap<Scalar> X(x.value().plane_ptr(n, c), s.h, s.w);
      MatMap<Scalar>(y.plane_ptr(n, c), out_h, out_w).noalias() = Py * X * Px.transpose();
    }
  const int xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, s, Py, Px, out_h, out_w](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& gy = t.grad(self);
    Tensor<Scalar>& gx = t.grad(xi);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        ConstMatMap<Scalar> G(gy.plane_ptr(n, c), out_h, out_w);
        MatMap<Scalar>(gx.plane_ptr(n, c), s.h, s.w).noalias() += Py.transpose() * G * Px;
      }
  });
}

template <typename Scalar>
Var<Scalar> mse_loss(Var<Scalar> pred, Var<Scalar> target) {
  if (!(pred.shape() == target.shape())) {
    throw DimensionError("mse_loss: shapes " + pred.shape().str() + " and " +
                         target.shape().str() + " differ");
  }
  const Index m = pred.shape().n;
  const Scalar inv_m = Scalar(1) / Scalar(m);
  Tensor<Scalar> y(Shape{1, 1, 1, 1});
  y.data()[0] = (pred.value().array() - target.value().array()).square().sum() * inv_m;
  const int pi = pred.id, ti = target.id;
  return pred.tape->record(std::move(y), {pred, target}, [pi, ti, inv_m](Tape<Scalar>& t, int self) {
    const Scalar g = t.grad(self).data()[0];
    const auto diff = t.value(pi).array() - t.value(ti).array();
    if (t.requires_grad(pi)) t.grad(pi).array() += (Scalar(2) * g * inv_m) * diff;
    if (t.requires_grad(ti)) t.grad(ti).array() -= (Scalar(2) * g * inv_m) * diff;
  });
}

#define HELMNET_INSTANTIATE_LAYERS(S)                                                            \
  template Var<S> conv2d(Var<S>, Var<S>, const Var<S>*, ConvSpec);                               \
  template Var<S> conv_transpose2d(Var<S>, Var<S>, const Var<S>*, ConvSpec, Index, Index);       \
  template Var<S> batchnorm(Var<S>, Var<S>, Var<S>, BatchNormStats<S>, bool);                    \
  template Var<S> softplus(Var<S>);                                                              \
  template Var<S> add(Var<S>, Var<S>);                                                           \
  template Var<S> scale(Var<S>, S);                                                              \
  template Var<S> repeat_batch(Var<S>, Index);                                                   \
  template RowMatrix<S> resample_matrix<S>(Index, Index);                                        \
  template Var<S> bilinear_resample(Var<S>, Index, Index);                                       \
  template Var<S> mse_loss(Var<S>, Var<S>);

HELMNET_INSTANTIATE_LAYERS(float)
HELMNET_INSTANTIATE_LAYERS(double)

}  // namespace helmnet::nn
