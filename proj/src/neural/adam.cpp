#include "helmnet/neural/adam.hpp"

#include <cmath>

namespace helmnet::nn {

template <typename Scalar>
void Adam<Scalar>::step(std::vector<Parameter<Scalar>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  if (m_.size() != params.size()) throw DimensionError("adam: parameter list changed between steps");
  ++t_;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  const Scalar step = Scalar(opt_.lr / c1);
  const Scalar inv_c2 = Scalar(1.0 / c2);
  const Scalar eps = Scalar(opt_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!(m_[i].shape() == p.value.shape())) throw DimensionError("adam: state shape mismatch for " + p.name);
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    const auto& g = p.grad.array();
    m = Scalar(b1) * m + Scalar(1 - b1) * g;
    v = Scalar(b2) * v + Scalar(1 - b2) * g.square();
    p.value.array() -= step * m / ((v * inv_c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace helmnet::nn
