// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels for the interpreter. Every reduction that the data-parallel
// rewrite reassociates (n-ary sums, shard concatenation) runs in a fixed
// ascending order so results are bit-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "wap/tensor.hpp"

namespace wap::kernels {

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const TensorShape& out_shape) {
  Tensor<Scalar> out(out_shape);
  out.matrix().noalias() = x.matrix() * w.matrix();
  return out;
}

template <typename Scalar>
Tensor<Scalar> grad_matmul_w(const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                             const TensorShape& out_shape) {
  Tensor<Scalar> out(out_shape);
  out.matrix().noalias() = x.matrix().transpose() * dy.matrix();
  return out;
}

template <typename Scalar>
Tensor<Scalar> grad_matmul_x(const Tensor<Scalar>& dy, const Tensor<Scalar>& w,
                             const TensorShape& out_shape) {
  Tensor<Scalar> out(out_shape);
  out.matrix().noalias() = dy.matrix() * w.matrix().transpose();
  return out;
}

/// [B,H,W,C] -> [B*H*W, K*K*C] patch matrix, column index (ky*K + kx)*C + c,
/// zero outside the image ("same" padding, stride 1).
template <typename Scalar>
typename Tensor<Scalar>::RowMatrix im2col(const Tensor<Scalar>& x, std::int64_t k) {
  const auto& d = x.shape().dims;
  const std::int64_t batch = d[0], height = d[1], width = d[2], channels = d[3];
  const std::int64_t pad = k / 2;
  typename Tensor<Scalar>::RowMatrix cols =
      Tensor<Scalar>::RowMatrix::Zero(batch * height * width, k * k * channels);
  const Scalar* src = x.data().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t h = 0; h < height; ++h) {
      for (std::int64_t w = 0; w < width; ++w) {
        Scalar* row = cols.row((b * height + h) * width + w).data();
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t sy = h + ky - pad;
          if (sy < 0 || sy >= height) continue;
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t sx = w + kx - pad;
            if (sx < 0 || sx >= width) continue;
            std::copy_n(src + ((b * height + sy) * width + sx) * channels, channels,
                        row + (ky * k + kx) * channels);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-add patch rows back into [B,H,W,C].
template <typename Scalar>
Tensor<Scalar> col2im(const typename Tensor<Scalar>::RowMatrix& cols,
                      const TensorShape& x_shape, std::int64_t k) {
  Tensor<Scalar> out(x_shape);
  const auto& d = x_shape.dims;
  const std::int64_t height = d[1], width = d[2], channels = d[3];
  const std::int64_t pad = k / 2;
  Scalar* dst = out.data().data();
  for (std::int64_t b = 0; b < d[0]; ++b) {
    for (std::int64_t h = 0; h < height; ++h) {
      for (std::int64_t w = 0; w < width; ++w) {
        const Scalar* row = cols.row((b * height + h) * width + w).data();
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t sy = h + ky - pad;
          if (sy < 0 || sy >= height) continue;
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t sx = w + kx - pad;
            if (sx < 0 || sx >= width) continue;
            Scalar* target = dst + ((b * height + sy) * width + sx) * channels;
            const Scalar* source = row + (ky * k + kx) * channels;
            for (std::int64_t c = 0; c < channels; ++c) target[c] += source[c];
          }
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Eigen::Map<const typename Tensor<Scalar>::RowMatrix> conv_weights(
    const Tensor<Scalar>& w) {
  const auto& d = w.shape().dims;
  return {w.data().data(), d[0] * d[1] * d[2], d[3]};
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const TensorShape& out_shape) {
  const auto k = w.shape().dims[0];
  const auto cols = im2col(x, k);
  Tensor<Scalar> out(out_shape);
  Eigen::Map<typename Tensor<Scalar>::RowMatrix> result(
      out.data().data(), cols.rows(), w.shape().dims[3]);
  result.noalias() = cols * conv_weights(w);
  return out;
}

template <typename Scalar>
Tensor<Scalar> grad_conv2d_w(const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                             const TensorShape& out_shape) {
  const auto k = out_shape.dims[0];
  const auto cols = im2col(x, k);
  const auto c_out = dy.shape().dims[3];
  Eigen::Map<const typename Tensor<Scalar>::RowMatrix> grad(dy.data().data(),
                                                             cols.rows(), c_out);
  Tensor<Scalar> out(out_shape);
  Eigen::Map<typename Tensor<Scalar>::RowMatrix> result(out.data().data(),
                                                         cols.cols(), c_out);
  result.noalias() = cols.transpose() * grad;
  return out;
}

template <typename Scalar>
Tensor<Scalar> grad_conv2d_x(const Tensor<Scalar>& dy, const Tensor<Scalar>& w,
                             const TensorShape& out_shape) {
  const auto k = w.shape().dims[0];
  const auto& d = dy.shape().dims;
  Eigen::Map<const typename Tensor<Scalar>::RowMatrix> grad(dy.data().data(),
                                                             d[0] * d[1] * d[2], d[3]);
  typename Tensor<Scalar>::RowMatrix cols = grad * conv_weights(w).transpose();
  return col2im<Scalar>(cols, out_shape, k);
}

template <typename Scalar>
Tensor<Scalar> bias_add(const Tensor<Scalar>& x, const Tensor<Scalar>& b) {
  Tensor<Scalar> out = x;
  const auto channels = static_cast<Eigen::Index>(b.size());
  Eigen::Map<typename Tensor<Scalar>::RowMatrix> rows(
      out.data().data(), static_cast<Eigen::Index>(out.size()) / channels, channels);
  rows.rowwise() += b.array().matrix().transpose();
  return out;
}

/// Column sums over every leading position, accumulated in ascending row order.
template <typename Scalar>
Tensor<Scalar> grad_bias(const Tensor<Scalar>& dy, const TensorShape& out_shape) {
  Tensor<Scalar> out(out_shape);
  const auto channels = static_cast<std::size_t>(out_shape.dims[0]);
  const auto data = dy.data();
  for (std::size_t i = 0; i < data.size(); ++i) out[i % channels] += data[i];
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out = x;
  out.array() = out.array().max(Scalar(0));
  return out;
}

template <typename Scalar>
Tensor<Scalar> grad_relu(const Tensor<Scalar>& dy, const Tensor<Scalar>& x) {
  Tensor<Scalar> out = dy;
  out.array() = (x.array() > Scalar(0)).select(dy.array(), Scalar(0));
  return out;
}

template <typename Scalar>
typename Tensor<Scalar>::RowMatrix softmax_rows(const Tensor<Scalar>& logits) {
  typename Tensor<Scalar>::RowMatrix p = logits.matrix();
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const Scalar peak = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - peak).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Sum over rows of cross-entropy(softmax(logits), labels), divided by
/// `normalizer`. Rows are accumulated in ascending order.
template <typename Scalar>
Tensor<Scalar> softmax_xent(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels,
                            std::int64_t normalizer) {
  const auto x = logits.matrix();
  const auto y = labels.matrix();
  Scalar total(0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar peak = x.row(r).maxCoeff();
    const Scalar log_z = peak + std::log((x.row(r).array() - peak).exp().sum());
    Scalar row_loss(0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) row_loss += y(r, c) * (log_z - x(r, c));
    total += row_loss;
  }
  return Tensor<Scalar>(TensorShape{{1}, std::nullopt},
                        {total / static_cast<Scalar>(normalizer)});
}

template <typename Scalar>
Tensor<Scalar> grad_softmax_xent(const Tensor<Scalar>& logits,
                                 const Tensor<Scalar>& labels,
                                 std::int64_t normalizer) {
  Tensor<Scalar> out(logits.shape());
  out.matrix() = (softmax_rows(logits) - labels.matrix()) /
                 static_cast<Scalar>(normalizer);
  return out;
}

/// Left fold ((a0 + a1) + a2) + ... in input order.
template <typename Scalar>
Tensor<Scalar> sum_n(const std::vector<const Tensor<Scalar>*>& parts,
                     const TensorShape& out_shape) {
  Tensor<Scalar> out(out_shape, parts.front()->values());
  for (std::size_t i = 1; i < parts.size(); ++i) out.array() += parts[i]->array();
  return out;
}

/// Splits along `axis` into `parts` equal slices.
template <typename Scalar>
std::vector<Tensor<Scalar>> split(const Tensor<Scalar>& x, std::size_t axis,
                                  std::int64_t parts, const TensorShape& part_shape) {
  const auto& d = x.shape().dims;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= d[i];
  for (std::size_t i = axis + 1; i < d.size(); ++i) inner *= d[i];
  const std::int64_t slice = d[axis] / parts;
  std::vector<Tensor<Scalar>> out;
  out.reserve(static_cast<std::size_t>(parts));
  const Scalar* src = x.data().data();
  for (std::int64_t p = 0; p < parts; ++p) {
    Tensor<Scalar> piece(part_shape);
    Scalar* dst = piece.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(src + (o * d[axis] + p * slice) * inner, slice * inner,
                  dst + o * slice * inner);
    }
    out.push_back(std::move(piece));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<const Tensor<Scalar>*>& parts,
                      std::size_t axis, const TensorShape& out_shape) {
  const auto& d = out_shape.dims;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= d[i];
  for (std::size_t i = axis + 1; i < d.size(); ++i) inner *= d[i];
  Tensor<Scalar> out(out_shape);
  Scalar* dst = out.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t offset = 0;
    for (const auto* part : parts) {
      const std::int64_t len = part->shape().dims[axis] * inner;
      std::copy_n(part->data().data() + o * len, len,
                  dst + o * d[axis] * inner + offset);
      offset += len;
    }
  }
  return out;
}

}  // namespace wap::kernels
