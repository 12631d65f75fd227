#include "helmnet/neural/network.hpp"

#include <cmath>

namespace helmnet::nn {

namespace {

constexpr Index kEncoderWidths[3] = {32, 128, 288};
constexpr Index kLevelChannels[3] = {16, 32, 64};
constexpr Index kImplicitChannels = 32;
constexpr Index kDeepInput = 512;

}  // namespace

std::string to_string(SolverVariant v) {
  return v == SolverVariant::Implicit ? "implicit" : "explicit";
}

SolverVariant parse_variant(const std::string& s) {
  if (s == "implicit" || s == "implicit_net") return SolverVariant::Implicit;
  if (s == "explicit" || s == "explicit_net") return SolverVariant::Explicit;
  throw ConfigError("unknown network variant '" + s + "'");
}

bool supported_input_size(Index n) { return n >= kMinNetInput && (n % 8 == 0 || n % 8 == 1); }

template <typename Scalar>
HelmNet<Scalar>::HelmNet(NetConfig cfg)
    : cfg_(cfg), kernel_cache_(std::make_unique<ImplicitKernel<Scalar>>()) {
  std::mt19937_64 rng(cfg.seed);
  const ConvSpec s1{1, 1, false}, s2{2, 1, false};

  Index cin = 2;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    const Index w = kEncoderWidths[l];
    encoder_[l][0] = make_conv(p + "0", cin, w, 3, s2, false, true, true, false, rng);
    encoder_[l][1] = make_conv(p + "1", w, w, 3, s1, false, true, true, false, rng);
    encoder_[l][2] = make_conv(p + "2", w, kLevelChannels[l], 3, s1, false, true, true, false, rng);
    cin = kLevelChannels[l];
  }

  cin = 2;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "solver.down." + std::to_string(l);
    down_[l] = make_conv(p + ".conv", cin, kLevelChannels[l], 3, s2, false, true, true, false, rng);
    down_ib_[l] = make_ib(p + ".ib", kLevelChannels[l], rng);
    cin = kLevelChannels[l];
  }
  for (int i = 0; i < 3; ++i) {
    bottom_[i] = make_conv("solver.bottom." + std::to_string(i), 64, 64, 3, s1, false, true, true,
                           false, rng);
  }
  if (cfg.variant == SolverVariant::Implicit) {
    implicit_weights_ = int(params_.size());
    params_.emplace_back("solver.implicit.kernel", ImplicitKernel<Scalar>::initial_weights(kImplicitChannels));
  }
  const Index up_in[3] = {64, 64, 32};
  const Index up_out[3] = {64, 32, 16};
  for (int l = 0; l < 3; ++l) {
    const std::string p = "solver.up." + std::to_string(l);
    up_[l].up = make_conv(p + ".up", up_in[l], up_out[l], 3, l == 0 ? s1 : s2, true, true, true, false,
                          rng);
    for (int i = 0; i < 2; ++i) {
      up_[l].convs[i] = make_conv(p + ".conv" + std::to_string(i), up_out[l], up_out[l], 3, s1, false,
                                  true, true, false, rng);
    }
  }
  head_ = make_conv("solver.head", 16, 2, 1, ConvSpec{1, 0, false}, false, false, false, true, rng);
}

template <typename Scalar>
HelmNet<Scalar>::HelmNet(const HelmNet& o)
    : cfg_(o.cfg_),
      params_(o.params_),
      buffers_(o.buffers_),
      encoder_(o.encoder_),
      down_(o.down_),
      down_ib_(o.down_ib_),
      bottom_(o.bottom_),
      implicit_weights_(o.implicit_weights_),
      up_(o.up_),
      head_(o.head_),
      kernel_cache_(std::make_unique<ImplicitKernel<Scalar>>()) {}

template <typename Scalar>
HelmNet<Scalar>& HelmNet<Scalar>::operator=(const HelmNet& o) {
  if (this != &o) {
    HelmNet tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

template <typename Scalar>
int HelmNet<Scalar>::add_param(const std::string& name, Shape shape, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.numel(); ++i) t.data()[i] = Scalar(dist(rng));
  params_.emplace_back(name, std::move(t));
  return int(params_.size()) - 1;
}

template <typename Scalar>
int HelmNet<Scalar>::add_buffer(const std::string& name, Tensor<Scalar> value) {
  buffers_.push_back(Buffer<Scalar>{name, std::move(value)});
  return int(buffers_.size()) - 1;
}

template <typename Scalar>
ConvUnit HelmNet<Scalar>::make_conv(const std::string& name, Index cin, Index cout, Index k,
                                    ConvSpec spec, bool transposed, bool bn, bool act, bool bias,
                                    std::mt19937_64& rng) {
  ConvUnit u;
  u.spec = spec;
  u.transposed = transposed;
  u.act = act;
  Shape ws;
  Index fan_in;
  if (spec.depthwise) {
    ws = Shape{cout, 1, k, k};
    fan_in = k * k;
  } else if (transposed) {
    ws = Shape{cin, cout, k, k};
    fan_in = cout * k * k;
  } else {
    ws = Shape{cout, cin, k, k};
    fan_in = cin * k * k;
  }
  u.weight = add_param(name + ".weight", ws, fan_in, rng);
  if (bias) u.bias = add_param(name + ".bias", Shape{1, cout, 1, 1}, fan_in, rng);
  if (bn) {
    u.bn_gamma = int(params_.size());
    params_.emplace_back(name + ".bn.weight", Tensor<Scalar>::Constant(Shape{1, cout, 1, 1}, Scalar(1)));
    u.bn_beta = int(params_.size());
    params_.emplace_back(name + ".bn.bias", Tensor<Scalar>(Shape{1, cout, 1, 1}));
    u.bn_mean = add_buffer(name + ".bn.running_mean", Tensor<Scalar>(Shape{1, cout, 1, 1}));
    u.bn_var = add_buffer(name + ".bn.running_var",
                          Tensor<Scalar>::Constant(Shape{1, cout, 1, 1}, Scalar(1)));
  }
  return u;
}

template <typename Scalar>
InvertedBottleneck HelmNet<Scalar>::make_ib(const std::string& name, Index c, std::mt19937_64& rng) {
  const Index e = 4 * c;
  InvertedBottleneck b;
  b.expand = make_conv(name + ".expand", c, e, 1, ConvSpec{1, 0, false}, false, true, true, false, rng);
  b.depthwise = make_conv(name + ".depthwise", e, e, 3, ConvSpec{1, 1, true}, false, true, true, false, rng);
  b.shrink = make_conv(name + ".shrink", e, c, 1, ConvSpec{1, 0, false}, false, true, false, false, rng);
  return b;
}

template <typename Scalar>
Var<Scalar> HelmNet<Scalar>::param(Tape<Scalar>& tape, int idx) {
  return tape.parameter(params_[std::size_t(idx)]);
}

template <typename Scalar>
Var<Scalar> HelmNet<Scalar>::run(Tape<Scalar>& tape, const ConvUnit& u, Var<Scalar> x, bool training,
                                 Index out_h, Index out_w) {
  const Var<Scalar> w = param(tape, u.weight);
  Var<Scalar> b;
  if (u.bias >= 0) b = param(tape, u.bias);
  const Var<Scalar>* bp = u.bias >= 0 ? &b : nullptr;
  Var<Scalar> y = u.transposed ? conv_transpose2d(x, w, bp, u.spec, out_h, out_w) : conv2d(x, w, bp, u.spec);
  if (u.bn_gamma >= 0) {
    BatchNormStats<Scalar> stats{&buffers_[std::size_t(u.bn_mean)].value,
                                 &buffers_[std::size_t(u.bn_var)].value};
    y = batchnorm(y, param(tape, u.bn_gamma), param(tape, u.bn_beta), stats, training);
  }
  if (u.act) y = softplus(y);
  return y;
}

template <typename Scalar>
Var<Scalar> HelmNet<Scalar>::run(Tape<Scalar>& tape, const InvertedBottleneck& b, Var<Scalar> x,
                                 bool training) {
  Var<Scalar> y = run(tape, b.expand, x, training);
  y = run(tape, b.depthwise, y, training);
  y = run(tape, b.shrink, y, training);
  return add(x, y);
}

template <typename Scalar>
std::array<Var<Scalar>, 3> HelmNet<Scalar>::encode(Tape<Scalar>& tape, Var<Scalar> model, bool training) {
  const Shape s = model.shape();
  if (s.c != 2 || s.h != s.w || !supported_input_size(s.h)) {
    throw DimensionError("encoder: input " + s.str() + " must be (G, 2, I, I) with I >= 17 and I mod 8 in {0, 1}");
  }
  std::array<Var<Scalar>, 3> out;
  Var<Scalar> x = model;
  for (int l = 0; l < 3; ++l) {
    for (int i = 0; i < 3; ++i) x = run(tape, encoder_[l][i], x, training);
    out[l] = x;
  }
  return out;
}

template <typename Scalar>
Var<Scalar> HelmNet<Scalar>::solve(Tape<Scalar>& tape, Var<Scalar> residual,
                                   const std::array<Var<Scalar>, 3>& enc, bool training) {
  const Shape s = residual.shape();
  if (s.c != 2 || s.h != s.w || !supported_input_size(s.h)) {
    throw DimensionError("solver: input " + s.str() + " must be (N, 2, I, I) with I >= 17 and I mod 8 in {0, 1}");
  }
  std::array<Var<Scalar>, 3> skips;
  Var<Scalar> x = residual;
  for (int l = 0; l < 3; ++l) {
    x = run(tape, down_[l], x, training);
    if (!(enc[l].shape() == x.shape())) {
      throw DimensionError("solver: encoding " + enc[l].shape().str() + " does not match level " +
                           x.shape().str());
    }
    x = add(x, enc[l]);
    x = run(tape, down_ib_[l], x, training);
    skips[l] = x;
  }
  const bool deep = s.h >= kDeepInput;
  ConvUnit b0 = bottom_[0];
  b0.spec.stride = deep ? 2 : 1;
  x = run(tape, b0, x, training);
  x = run(tape, bottom_[1], x, training);
  x = run(tape, bottom_[2], x, training);
  if (implicit_weights_ >= 0) x = implicit_layer(x, param(tape, implicit_weights_), *kernel_cache_);
  for (int l = 0; l < 3; ++l) {
    const Shape target = skips[2 - l].shape();
    UpBlock u = up_[l];
    if (l == 0) u.up.spec.stride = deep ? 2 : 1;
    x = run(tape, u.up, x, training, target.h, target.w);
    x = add(x, skips[2 - l]);
    x = run(tape, u.convs[0], x, training);
    x = run(tape, u.convs[1], x, training);
  }
  x = run(tape, head_, x, training);
  return bilinear_resample(x, s.h, s.w);
}

template <typename Scalar>
Encodings<Scalar> HelmNet<Scalar>::encode(const SlownessModel<double>& model) const {
  const Index ny = model.ny(), nx = model.nx();
  Tensor<Scalar> in(Shape{1, 2, ny, nx});
  for (Index y = 0; y < ny; ++y)
    for (Index x = 0; x < nx; ++x) {
      in(0, 0, y, x) = Scalar(model.kappa_sq(y, x));
      in(0, 1, y, x) = Scalar(model.gamma(y, x));
    }
  Tape<Scalar> tape(false);
  auto* self = const_cast<HelmNet*>(this);
  const auto v = self->encode(tape, tape.constant(std::move(in)), false);
  return {v[0].value(), v[1].value(), v[2].value()};
}

template <typename Scalar>
Tensor<Scalar> HelmNet<Scalar>::solve(const Tensor<Scalar>& residual, const Encodings<Scalar>& enc) const {
  Tape<Scalar> tape(false);
  std::array<Var<Scalar>, 3> ev;
  const Index n = residual.shape().n;
  for (int l = 0; l < 3; ++l) {
    ev[l] = tape.constant(enc[l]);
    if (enc[l].shape().n != n) ev[l] = repeat_batch(ev[l], n / enc[l].shape().n);
  }
  auto* self = const_cast<HelmNet*>(this);
  Var<Scalar> out = self->solve(tape, tape.constant(residual), ev, false);
  if (!out.value().array().allFinite()) throw NumericalError("solver network produced non-finite output");
  return out.value();
}

namespace {

double rms(const ComplexField<double>& r) {
  return r.values().norm() / std::sqrt(double(std::max<Index>(r.size(), 1)));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> HelmNet<Scalar>::residual_input(const ComplexField<double>& r) const {
  const double s = cfg_.normalize_input ? rms(r) : 1.0;
  const double inv = s > 0 ? 1.0 / s : 0.0;
  Tensor<Scalar> t(Shape{1, 2, r.ny(), r.nx()});
  for (Index y = 0; y < r.ny(); ++y)
    for (Index x = 0; x < r.nx(); ++x) {
      t(0, 0, y, x) = Scalar(r(y, x).real() * inv);
      t(0, 1, y, x) = Scalar(r(y, x).imag() * inv);
    }
  return t;
}

template <typename Scalar>
Tensor<Scalar> HelmNet<Scalar>::error_target(const ComplexField<double>& r,
                                             const ComplexField<double>& e) const {
  const double s = (cfg_.normalize_input ? rms(r) : 1.0) * cfg_.output_scale * r.h() * r.h();
  const double inv = s > 0 ? 1.0 / s : 0.0;
  Tensor<Scalar> t(Shape{1, 2, e.ny(), e.nx()});
  for (Index y = 0; y < e.ny(); ++y)
    for (Index x = 0; x < e.nx(); ++x) {
      t(0, 0, y, x) = Scalar(e(y, x).real() * inv);
      t(0, 1, y, x) = Scalar(e(y, x).imag() * inv);
    }
  return t;
}

template <typename Scalar>
ComplexField<double> HelmNet<Scalar>::predict(const ComplexField<double>& r,
                                              const Encodings<Scalar>& enc) const {
  ComplexField<double> e = ComplexField<double>::ZeroLike(r);
  const double s = (cfg_.normalize_input ? rms(r) : 1.0) * cfg_.output_scale * r.h() * r.h();
  if (s == 0.0) return e;
  const Tensor<Scalar> out = solve(residual_input(r), enc);
  for (Index y = 0; y < r.ny(); ++y)
    for (Index x = 0; x < r.nx(); ++x)
      e(y, x) = std::complex<double>(double(out(0, 0, y, x)), double(out(0, 1, y, x))) * s;
  return e;
}

template <typename Scalar>
Index HelmNet<Scalar>::encoder_parameter_count() const {
  Index n = 0;
  for (const auto& p : params_)
    if (p.name.rfind("encoder.", 0) == 0) n += p.value.numel();
  return n;
}

template <typename Scalar>
Index HelmNet<Scalar>::solver_parameter_count() const {
  Index n = 0;
  for (const auto& p : params_)
    if (p.name.rfind("solver.", 0) == 0) n += p.value.numel();
  return n;
}

template <typename Scalar>
std::uint64_t HelmNet<Scalar>::architecture_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) mix(p.name + p.value.shape().str() + ";");
  for (const auto& b : buffers_) mix(b.name + b.value.shape().str() + ";");
  return h;
}

template <typename Scalar>
void HelmNet<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class HelmNet<float>;
template class HelmNet<double>;

}  // namespace helmnet::nn
