#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "helmnet/field.hpp"
#include "helmnet/green.hpp"
#include "helmnet/neural/layers.hpp"

namespace helmnet::nn {

enum class SolverVariant { Explicit, Implicit };

std::string to_string(SolverVariant v);
SolverVariant parse_variant(const std::string& s);

struct NetConfig {
  SolverVariant variant = SolverVariant::Implicit;
  /// Divide the residual by its RMS before the network and undo it after.
  bool normalize_input = true;
  /// Network output is multiplied by output_scale * h^2 (times the RMS when
  /// normalize_input is on) to give the error estimate.
  double output_scale = 10.0;
  std::uint64_t seed = 0;
};

/// Non-trainable state (batchnorm running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Tensor<Scalar> value;
};

/// Conv (plain, depthwise or transposed) + optional batchnorm + optional
/// softplus, addressed by indices into the parameter/buffer lists.
struct ConvUnit {
  int weight = -1;
  int bias = -1;
  int bn_gamma = -1, bn_beta = -1;
  int bn_mean = -1, bn_var = -1;
  ConvSpec spec;
  bool transposed = false;
  bool act = true;
};

struct InvertedBottleneck {
  ConvUnit expand, depthwise, shrink;
};

struct UpBlock {
  ConvUnit up;
  std::array<ConvUnit, 2> convs;
};

/// Per-model encodings at I/2, I/4 and I/8 (16, 32, 64 channels).
template <typename Scalar>
using Encodings = std::array<Tensor<Scalar>, 3>;

/// Smallest supported input extent and the admissible residues mod 8: even
/// sizes 8m and vertex sizes 8m + 1. The floor keeps the coarsest map at
/// least 3x3, which the implicit layer needs.
inline constexpr Index kMinNetInput = 17;
bool supported_input_size(Index n);

/// Encoder + solver networks. Parameters live in flat lists; layers refer to
/// them by index, so copies are independent.
template <typename Scalar>
class HelmNet {
 public:
  explicit HelmNet(NetConfig cfg = {});
  HelmNet(const HelmNet& other);
  HelmNet& operator=(const HelmNet& other);
  HelmNet(HelmNet&&) noexcept = default;
  HelmNet& operator=(HelmNet&&) noexcept = default;

  const NetConfig& config() const { return cfg_; }
  NetConfig& config() { return cfg_; }

  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  std::vector<Buffer<Scalar>>& buffers() { return buffers_; }
  const std::vector<Buffer<Scalar>>& buffers() const { return buffers_; }

  Index encoder_parameter_count() const;
  Index solver_parameter_count() const;
  /// Hash of the layer names and shapes.
  std::uint64_t architecture_hash() const;
  void zero_grad();

  /// Encoder on (G, 2, I, I) planes (kappa^2, gamma).
  std::array<Var<Scalar>, 3> encode(Tape<Scalar>& tape, Var<Scalar> model, bool training);
  /// Solver on (N, 2, I, I) residuals; encodings must have batch N.
  Var<Scalar> solve(Tape<Scalar>& tape, Var<Scalar> residual, const std::array<Var<Scalar>, 3>& enc,
                    bool training);

  /// Inference helpers (running statistics, no gradients).
  Encodings<Scalar> encode(const SlownessModel<double>& model) const;
  Tensor<Scalar> solve(const Tensor<Scalar>& residual, const Encodings<Scalar>& enc) const;

  /// Error estimate for a residual field, applying the configured scaling.
  ComplexField<double> predict(const ComplexField<double>& r, const Encodings<Scalar>& enc) const;

  /// Network-space input/target for a (residual, error) pair; inverse of the
  /// scaling applied in predict.
  Tensor<Scalar> residual_input(const ComplexField<double>& r) const;
  Tensor<Scalar> error_target(const ComplexField<double>& r, const ComplexField<double>& e) const;

  const ImplicitKernel<Scalar>& kernel_cache() const { return *kernel_cache_; }

 private:
  int add_param(const std::string& name, Shape shape, Index fan_in, std::mt19937_64& rng);
  int add_buffer(const std::string& name, Tensor<Scalar> value);
  ConvUnit make_conv(const std::string& name, Index cin, Index cout, Index k, ConvSpec spec,
                     bool transposed, bool bn, bool act, bool bias, std::mt19937_64& rng);
  InvertedBottleneck make_ib(const std::string& name, Index c, std::mt19937_64& rng);

  Var<Scalar> run(Tape<Scalar>& tape, const ConvUnit& u, Var<Scalar> x, bool training, Index out_h = -1,
                  Index out_w = -1);
  Var<Scalar> run(Tape<Scalar>& tape, const InvertedBottleneck& b, Var<Scalar> x, bool training);
  Var<Scalar> param(Tape<Scalar>& tape, int idx);

  NetConfig cfg_;
  std::vector<Parameter<Scalar>> params_;
  std::vector<Buffer<Scalar>> buffers_;

  std::array<std::array<ConvUnit, 3>, 3> encoder_;
  std::array<ConvUnit, 3> down_;
  std::array<InvertedBottleneck, 3> down_ib_;
  std::array<ConvUnit, 3> bottom_;
  int implicit_weights_ = -1;
  std::array<UpBlock, 3> up_;
  ConvUnit head_;
  std::unique_ptr<ImplicitKernel<Scalar>> kernel_cache_;
};

/// Closed-form parameter count of an inverted bottleneck on c channels
/// (expansion 4, all convolutions bias-free, batchnorm after each).
inline Index inverted_bottleneck_parameter_count(Index c) {
  const Index e = 4 * c;
  return (c * e + 2 * e) + (9 * e + 2 * e) + (e * c + 2 * c);
}

}  // namespace helmnet::nn
