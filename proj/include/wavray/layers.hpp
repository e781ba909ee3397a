#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wavray/ops.hpp"
#include "wavray/rng.hpp"
#include "wavray/tensor.hpp"

namespace wavray {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

/// Leaf parameter drawn from N(0, stddev^2).
template <typename T>
Tensor<T> normal_param(const Shape& shape, Rng& rng, double stddev) {
  std::vector<T> values(shape.numel());
  for (T& v : values) v = static_cast<T>(stddev * rng.normal());
  auto t = Tensor<T>::from(shape, std::move(values));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> constant_param(const Shape& shape, T value) {
  auto t = Tensor<T>::full(shape, value);
  t.set_requires_grad(true);
  return t;
}

/// 1x1 convolution with bias; weights ~ N(0, 1/fan_in).
template <typename T>
struct Pointwise {
  Tensor<T> weight;
  Tensor<T> bias;

  static Pointwise init(std::size_t in, std::size_t out, Rng& rng) {
    return {normal_param<T>(Shape{out, in, 1, 1}, rng, 1.0 / std::sqrt(static_cast<double>(in))),
            constant_param<T>(Shape{out}, T(0))};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return pointwise_conv(x, weight, bias); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Per-location normalization over channels with learnable gain and shift.
template <typename T>
struct ChannelNorm {
  Tensor<T> gain;
  Tensor<T> shift;

  static ChannelNorm init(std::size_t channels) {
    return {constant_param<T>(Shape{channels}, T(1)), constant_param<T>(Shape{channels}, T(0))};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, shift); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".shift", shift});
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {normal_param<T>(Shape{out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in))),
            constant_param<T>(Shape{out}, T(0))};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
std::size_t count_scalars(const ParamList<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  return total;
}

}  // namespace wavray
