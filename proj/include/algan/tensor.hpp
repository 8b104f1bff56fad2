#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace algan {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of reals with an explicit shape.
///
/// A shape of `{}` denotes a scalar (one element). Storage is a flat Eigen
/// array so elementwise work can be written as Eigen expressions; `matrix()`
/// gives a row-major 2D view for GEMM-shaped work.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() : data_(Array::Zero(1)) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Array::Zero(numel(shape_));
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != numel(shape_)) {
      throw std::invalid_argument("tensor length mismatch: shape " + to_string(shape_) +
                                  " needs " + std::to_string(numel(shape_)) + " values, got " +
                                  std::to_string(data_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return constant({}, value); }

  static Tensor from(Shape shape, const std::vector<Scalar>& values) {
    Array data = Eigen::Map<const Array>(values.data(), static_cast<Index>(values.size()));
    return Tensor(std::move(shape), std::move(data));
  }

  const Shape& shape() const { return shape_; }
  Index ndim() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar item() const {
    if (data_.size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + to_string(shape_));
    return data_[0];
  }

  /// Row-major view as rows x (size/rows).
  MatrixMap matrix(Index rows) {
    return MatrixMap(data_.data(), rows, rows ? data_.size() / rows : 0);
  }
  ConstMatrixMap matrix(Index rows) const {
    return ConstMatrixMap(data_.data(), rows, rows ? data_.size() / rows : 0);
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw std::invalid_argument("reshape " + to_string(shape_) + " -> " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  static void check_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive: " + to_string(shape));
    }
  }

  Shape shape_;
  Array data_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace algan
