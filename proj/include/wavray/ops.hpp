#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "wavray/tensor.hpp"

namespace wavray {

/// Broadcasting is limited to exact shape matches and a rank-1 `[C]` operand
/// applied along axis 1 of the other operand.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Normalizes over the channel axis (axis 1) independently at every spatial
/// location of an [N,C,H,W] or [N,C] tensor, then applies per-channel gain
/// and shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     T eps = T(1e-5));

/// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x [N,in], weight [out,in], optional bias [out] -> [N,out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});

struct Conv2dParams {
  std::pair<std::size_t, std::size_t> stride{1, 1};
  std::pair<std::size_t, std::size_t> padding{0, 0};
  std::size_t groups = 1;
};

/// Cross-correlation with zero padding. kernel is [Cout, Cin/groups, kh, kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias = {},
                 const Conv2dParams& params = {});

/// Per-pixel channel mixing; weight is [Cout, C, 1, 1].
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Tensor<T>& weight,
                         const Tensor<T>& bias = {});

/// Numerically stable softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Mean over one axis; the axis is removed from the result.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);

/// Broadcasts unit extents of `x` up to `shape` (same rank). The backward
/// pass sums over the broadcast axes.
template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape);

/// Replicates edge values to pad the two trailing axes.
template <typename T>
Tensor<T> pad_edge(const Tensor<T>& x, std::size_t pad_h, std::size_t pad_w);

/// [N,C,H,W] -> [N,H*W,C], pixels in row-major order.
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x);

/// Mean negative log-likelihood of `labels` under softmax(logits).
/// logits is [N,K]; every label must lie in [0,K).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace wavray
