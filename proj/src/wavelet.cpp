#include "wavray/wavelet.hpp"

#include <cmath>

namespace wavray {

template <typename T>
WaveFilterPair<T> WaveFilterPair<T>::init() {
  auto low = Tensor<T>::from(Shape{kLowTaps}, {T(1) / 3, T(1) / 3, T(1) / 3});
  auto high = Tensor<T>::from(Shape{kHighTaps}, {T(-0.25), T(-0.5), T(1.5), T(-0.5), T(-0.25)});
  low.set_requires_grad(true);
  high.set_requires_grad(true);
  return {low, high};
}

template <typename T>
void WaveFilterPair<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".low", low});
  out.push_back({prefix + ".high", high});
}

template <typename T>
Tensor<T> depthwise_filter(const Tensor<T>& x, const Tensor<T>& taps, FilterAxis axis,
                           std::size_t stride) {
  if (x.shape().rank() != 4) throw ShapeError("depthwise_filter: expected [N,C,H,W], got " + x.shape().str());
  if (taps.shape().rank() != 1) throw ShapeError("depthwise_filter: taps must be rank 1, got " + taps.shape().str());
  const std::size_t channels = x.dim(1);
  const std::size_t k = taps.dim(0);
  const std::size_t pad = k / 2;
  const bool along_width = axis == FilterAxis::kWidth;
  const Shape unit = along_width ? Shape{1, 1, 1, k} : Shape{1, 1, k, 1};
  const Shape full = along_width ? Shape{channels, 1, 1, k} : Shape{channels, 1, k, 1};
  const Tensor<T> kernel = expand(reshape(taps, unit), full);
  const Tensor<T> padded = along_width ? pad_edge(x, 0, pad) : pad_edge(x, pad, 0);
  Conv2dParams params;
  params.groups = channels;
  params.stride = along_width ? std::pair<std::size_t, std::size_t>{1, stride}
                              : std::pair<std::size_t, std::size_t>{stride, 1};
  return conv2d(padded, kernel, Tensor<T>{}, params);
}

template <typename T>
Bands<T> wave_decompose(const Tensor<T>& f, const WaveFilterPair<T>& filters, std::size_t stride) {
  if (f.shape().rank() != 4) throw ShapeError("wave_decompose: expected [N,C,H,W], got " + f.shape().str());
  if (stride != 1 && stride != 2) throw ValueError("wave_decompose: stride must be 1 or 2");
  if (stride == 2 && (f.dim(2) % 2 != 0 || f.dim(3) % 2 != 0)) {
    throw ShapeError("wave_decompose: stride 2 needs even extents, got " + f.shape().str());
  }
  const Tensor<T> lo = depthwise_filter(f, filters.low, FilterAxis::kWidth, stride);
  const Tensor<T> hi = depthwise_filter(f, filters.high, FilterAxis::kWidth, stride);
  return {depthwise_filter(lo, filters.low, FilterAxis::kHeight, stride),
          depthwise_filter(lo, filters.high, FilterAxis::kHeight, stride),
          depthwise_filter(hi, filters.low, FilterAxis::kHeight, stride),
          depthwise_filter(hi, filters.high, FilterAxis::kHeight, stride)};
}

namespace {

template <typename T>
Tensor<T> concat_bands(const Bands<T>& bands) {
  const auto parts = bands.list();
  return concat<T>(parts, 1);
}

}  // namespace

// --- Stem -------------------------------------------------------------------

template <typename T>
Stem<T>::Stem(std::size_t out_channels, Rng& rng)
    : kernel_(normal_param<T>(Shape{out_channels, 3, 7, 7}, rng, 1.0 / std::sqrt(3.0 * 49.0))),
      bias_(constant_param<T>(Shape{out_channels}, T(0))),
      norm_(ChannelNorm<T>::init(out_channels)) {}

template <typename T>
Tensor<T> Stem<T>::forward(const Tensor<T>& image) const {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s[1] != 3) throw ShapeError("stem: expected [N,3,H,W], got " + s.str());
  if (s[2] < 14 || s[3] < 14 || s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError("stem: input " + s.str() + " is undersized; H and W must be even and >= 14");
  }
  Conv2dParams params;
  params.stride = {2, 2};
  params.padding = {3, 3};
  return gelu(norm_(conv2d(image, kernel_, bias_, params)));
}

template <typename T>
void Stem<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".conv.weight", kernel_});
  out.push_back({prefix + ".conv.bias", bias_});
  norm_.collect(out, prefix + ".norm");
}

// --- ExtractStage -------------------------------------------------------------

template <typename T>
ExtractStage<T>::ExtractStage(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : filters_(WaveFilterPair<T>::init()),
      project_(Pointwise<T>::init(4 * in_channels, out_channels, rng)),
      norm_(ChannelNorm<T>::init(out_channels)) {}

template <typename T>
Tensor<T> ExtractStage<T>::forward(const Tensor<T>& f) const {
  return gelu(norm_(project_(concat_bands(wave_decompose(f, filters_, 2)))));
}

template <typename T>
void ExtractStage<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  filters_.collect(out, prefix + ".filters");
  project_.collect(out, prefix + ".project");
  norm_.collect(out, prefix + ".norm");
}

// --- ModulationBlock ------------------------------------------------------------

namespace {

/// Bottleneck width. Four bands of C/4 channels concatenate back to C, so the
/// reduction factor is fixed at 4.
std::size_t bottleneck_width(std::size_t channels, std::size_t reduction) {
  if (reduction != 4) {
    throw ValueError("modulation_block: bottleneck reduction must be 4, got " + std::to_string(reduction));
  }
  if (channels == 0 || channels % 4 != 0) {
    throw ShapeError("modulation_block: channels (" + std::to_string(channels) +
                     ") must be divisible by 4");
  }
  return channels / 4;
}

}  // namespace

template <typename T>
ModulationBlock<T>::ModulationBlock(std::size_t channels, std::size_t reduction, Rng& rng)
    : channels_(channels),
      norm_(ChannelNorm<T>::init(channels)),
      reduce_(Pointwise<T>::init(channels, bottleneck_width(channels, reduction), rng)),
      mid_(Pointwise<T>::init(channels, channels / 4, rng)),
      filters_(WaveFilterPair<T>::init()),
      value_(Pointwise<T>::init(channels, channels, rng)),
      out_(Pointwise<T>::init(channels, channels, rng)) {}

template <typename T>
Tensor<T> ModulationBlock<T>::attention(const Tensor<T>& normalized) const {
  // Round 1: C -> C/4 -> four bands -> C. Round 2 repeats with the same filters.
  const Tensor<T> first = concat_bands(wave_decompose(reduce_(normalized), filters_, 1));
  return concat_bands(wave_decompose(mid_(gelu(first)), filters_, 1));
}

template <typename T>
Tensor<T> ModulationBlock<T>::value(const Tensor<T>& normalized) const {
  return value_(normalized);
}

template <typename T>
Tensor<T> ModulationBlock<T>::forward(const Tensor<T>& f, const Tensor<T>* attention_override) const {
  if (f.shape().rank() != 4 || f.dim(1) != channels_) {
    throw ShapeError("modulation_block: expected " + std::to_string(channels_) +
                     " channels, got " + f.shape().str());
  }
  const Tensor<T> h = norm_(f);
  const Tensor<T> a = attention_override ? *attention_override : attention(h);
  return add(f, out_(mul(a, value(h))));
}

template <typename T>
void ModulationBlock<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  norm_.collect(out, prefix + ".norm");
  reduce_.collect(out, prefix + ".reduce");
  filters_.collect(out, prefix + ".filters");
  mid_.collect(out, prefix + ".mid");
  value_.collect(out, prefix + ".value");
  out_.collect(out, prefix + ".out");
}

// --- WavePool -------------------------------------------------------------------

template <typename T>
WavePool<T>::WavePool(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng)
    : stride_(stride),
      filters_(WaveFilterPair<T>::init()),
      transition_(Pointwise<T>::init(2 * in_channels, out_channels, rng)),
      norm_(ChannelNorm<T>::init(out_channels)) {}

template <typename T>
Tensor<T> WavePool<T>::fuse(const Tensor<T>& f) const {
  const Bands<T> b = wave_decompose(f, filters_, stride_);
  const std::array<Tensor<T>, 2> pairs{add(b.ll, b.hh), add(b.lh, b.hl)};
  return concat<T>(pairs, 1);
}

template <typename T>
Tensor<T> WavePool<T>::forward(const Tensor<T>& f) const {
  return norm_(transition_(fuse(f)));
}

template <typename T>
void WavePool<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  filters_.collect(out, prefix + ".filters");
  transition_.collect(out, prefix + ".transition");
  norm_.collect(out, prefix + ".norm");
}

template struct WaveFilterPair<float>;
template struct WaveFilterPair<double>;
template Tensor<float> depthwise_filter(const Tensor<float>&, const Tensor<float>&, FilterAxis, std::size_t);
template Tensor<double> depthwise_filter(const Tensor<double>&, const Tensor<double>&, FilterAxis, std::size_t);
template Bands<float> wave_decompose(const Tensor<float>&, const WaveFilterPair<float>&, std::size_t);
template Bands<double> wave_decompose(const Tensor<double>&, const WaveFilterPair<double>&, std::size_t);
template class Stem<float>;
template class Stem<double>;
template class ExtractStage<float>;
template class ExtractStage<double>;
template class ModulationBlock<float>;
template class ModulationBlock<double>;
template class WavePool<float>;
template class WavePool<double>;

}  // namespace wavray
