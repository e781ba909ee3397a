#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "wavray/layers.hpp"
#include "wavray/tensor.hpp"

namespace wavray {

/// Learnable low/high 1-D filter bank shared by every channel of a block.
/// The low filter starts as a 3-tap average, the high filter as a 5-tap
/// zero-sum difference, so constants pass through the low band only.
template <typename T>
struct WaveFilterPair {
  static constexpr std::size_t kLowTaps = 3;
  static constexpr std::size_t kHighTaps = 5;

  Tensor<T> low;   // [3]
  Tensor<T> high;  // [5]

  static WaveFilterPair init();
  void collect(ParamList<T>& out, const std::string& prefix) const;
};

/// Four separable bands. The first letter names the filter applied along the
/// width, the second the filter applied along the height.
template <typename T>
struct Bands {
  Tensor<T> ll, lh, hl, hh;

  std::array<Tensor<T>, 4> list() const { return {ll, lh, hl, hh}; }
};

enum class FilterAxis { kWidth, kHeight };

/// Depthwise 1-D filtering of an [N,C,H,W] map along one axis with the same
/// taps on every channel. Edges are extended by replication so "same"
/// output extents hold at stride 1 and constants are preserved exactly.
template <typename T>
Tensor<T> depthwise_filter(const Tensor<T>& x, const Tensor<T>& taps, FilterAxis axis,
                           std::size_t stride);

/// Two-level separable decomposition: low/high along the width, then
/// low/high along the height of each result. Stride 2 halves both extents
/// and requires even H and W.
template <typename T>
Bands<T> wave_decompose(const Tensor<T>& f, const WaveFilterPair<T>& filters, std::size_t stride);

/// 7x7 stride-2 convolution from RGB, then norm and GELU.
template <typename T>
class Stem {
 public:
  Stem(std::size_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& image) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  Tensor<T> kernel_;
  Tensor<T> bias_;
  ChannelNorm<T> norm_;
};

/// Stride-2 decomposition, band concatenation (4C), pointwise projection,
/// norm and GELU.
template <typename T>
class ExtractStage {
 public:
  ExtractStage(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& f) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  WaveFilterPair<T> filters_;
  Pointwise<T> project_;
  ChannelNorm<T> norm_;
};

/// Pre-norm residual block computing f + W_o(A * V). The attention surrogate
/// A comes from a C/4 bottleneck passed through two stride-1 decomposition
/// rounds that read the same filter pair.
template <typename T>
class ModulationBlock {
 public:
  ModulationBlock(std::size_t channels, std::size_t reduction, Rng& rng);

  /// `attention_override`, when given, replaces A (tests inject ones here).
  Tensor<T> forward(const Tensor<T>& f, const Tensor<T>* attention_override = nullptr) const;
  /// The A branch on already-normalized input.
  Tensor<T> attention(const Tensor<T>& normalized) const;
  /// The V branch on already-normalized input.
  Tensor<T> value(const Tensor<T>& normalized) const;

  const ChannelNorm<T>& norm() const { return norm_; }
  const Pointwise<T>& output_projection() const { return out_; }
  WaveFilterPair<T>& filters() { return filters_; }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  std::size_t channels_;
  ChannelNorm<T> norm_;
  Pointwise<T> reduce_;
  Pointwise<T> mid_;
  WaveFilterPair<T> filters_;
  Pointwise<T> value_;
  Pointwise<T> out_;
};

/// Pair-fusion pooling: decompose, fuse [LL+HH ; LH+HL] (2C channels), then
/// a pointwise transition to the next width and a norm.
template <typename T>
class WavePool {
 public:
  WavePool(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng);
  Tensor<T> forward(const Tensor<T>& f) const;
  /// The 2C-channel fused map before the transition.
  Tensor<T> fuse(const Tensor<T>& f) const;
  std::size_t stride() const { return stride_; }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  std::size_t stride_;
  WaveFilterPair<T> filters_;
  Pointwise<T> transition_;
  ChannelNorm<T> norm_;
};

}  // namespace wavray
