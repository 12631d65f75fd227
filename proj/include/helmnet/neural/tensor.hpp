#pragma once

#include <string>

#include <Eigen/Core>

#include "helmnet/errors.hpp"

namespace helmnet::nn {

using Index = Eigen::Index;

/// NCHW extents.
struct Shape {
  Index n = 0, c = 0, h = 0, w = 0;

  Index numel() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense NCHW tensor of real scalars.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(Array::Zero(s.numel())) {}
  Tensor(Shape s, Array data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != s.numel()) throw DimensionError("Tensor: data size does not match shape");
  }

  static Tensor Zero(Shape s) { return Tensor(s); }
  static Tensor Constant(Shape s, Scalar v) { return Tensor(s, Array::Constant(s.numel(), v)); }

  const Shape& shape() const { return shape_; }
  Index numel() const { return shape_.numel(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar* plane_ptr(Index n, Index c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const Scalar* plane_ptr(Index n, Index c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  PlaneMap plane(Index n, Index c) { return PlaneMap(plane_ptr(n, c), shape_.h, shape_.w); }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  Array data_;
};

/// A named trainable tensor with its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor<Scalar>(value.shape()); }
};

}  // namespace helmnet::nn
