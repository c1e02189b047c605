// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "wap/graph_ir.hpp"

namespace wap {

/// Dense row-major tensor. The leading dim is the row index of matrix().
template <typename Scalar>
class Tensor {
 public:
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;
  explicit Tensor(TensorShape shape)
      : shape_(std::move(shape)),
        data_(static_cast<std::size_t>(shape_.num_elements()), Scalar(0)) {}
  Tensor(TensorShape shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.num_elements()) {
      throw Error(ErrorCode::kPrecondition,
                  "tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_.str());
    }
  }

  const TensorShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<const Scalar> data() const { return data_; }
  std::span<Scalar> data() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  Eigen::Index rows() const { return shape_.dims.empty() ? 1 : shape_.dims[0]; }
  Eigen::Index cols() const {
    return rows() == 0 ? 0 : static_cast<Eigen::Index>(data_.size()) / rows();
  }

  ConstMatrixMap matrix() const { return {data_.data(), rows(), cols()}; }
  MatrixMap matrix() { return {data_.data(), rows(), cols()}; }
  ConstArrayMap array() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }
  ArrayMap array() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

  /// Same data, new dims (element count must match).
  Tensor reshaped(TensorShape shape) const { return Tensor(std::move(shape), data_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_.dims == b.shape_.dims && a.data_ == b.data_;
  }

 private:
  TensorShape shape_;
  std::vector<Scalar> data_;
};

using TensorValue = Tensor<double>;

}  // namespace wap
