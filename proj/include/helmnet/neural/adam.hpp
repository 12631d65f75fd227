#pragma once

#include <vector>

#include "helmnet/neural/tensor.hpp"

namespace helmnet::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  AdamOptions& options() { return opt_; }
  const AdamOptions& options() const { return opt_; }
  long steps() const { return t_; }

  void step(std::vector<Parameter<Scalar>>& params);
  void reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
  }

 private:
  AdamOptions opt_;
  long t_ = 0;
  std::vector<Tensor<Scalar>> m_, v_;
};

}  // namespace helmnet::nn
