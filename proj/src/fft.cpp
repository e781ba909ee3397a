#include "wavray/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wavray {

namespace fft_detail {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

template <typename T>
std::complex<T> twiddle(std::size_t k, std::size_t n, bool inverse) {
  // Computed in double so single-precision twiddles carry no accumulated phase error.
  const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(n);
  return {static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle))};
}

/// Iterative radix-2 Cooley-Tukey on a strided 1-D sequence, unnormalized.
template <typename T>
void radix2(std::complex<T>* data, std::size_t n, std::size_t stride, bool inverse,
            std::vector<std::complex<T>>& scratch) {
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = data[i * stride];
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(scratch[i], scratch[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const std::complex<T> w = twiddle<T>(k, len, inverse);
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<T> u = scratch[start + k];
        const std::complex<T> v = scratch[start + k + half] * w;
        scratch[start + k] = u + v;
        scratch[start + k + half] = u - v;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
}

/// Direct O(n^2) DFT for extents that are not powers of two.
template <typename T>
void direct(std::complex<T>* data, std::size_t n, std::size_t stride, bool inverse,
            std::vector<std::complex<T>>& scratch) {
  std::vector<std::complex<T>> table(n);
  for (std::size_t m = 0; m < n; ++m) table[m] = twiddle<T>(m, n, inverse);
  scratch.assign(n, {});
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<T> acc{};
    for (std::size_t j = 0; j < n; ++j) acc += data[j * stride] * table[(j * k) % n];
    scratch[k] = acc;
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
}

template <typename T>
void transform_1d(std::complex<T>* data, std::size_t n, std::size_t stride, bool inverse,
                  std::vector<std::complex<T>>& scratch) {
  if (n == 1) return;
  if (is_power_of_two(n)) {
    radix2(data, n, stride, inverse, scratch);
  } else {
    direct(data, n, stride, inverse, scratch);
  }
}

void check_extents(const Shape& shape, ExtentPolicy policy, const char* op) {
  if (shape.rank() < 2) throw ShapeError(std::string(op) + ": need at least rank 2, got " + shape.str());
  if (policy != ExtentPolicy::kPowerOfTwo) return;
  const std::size_t h = shape[shape.rank() - 2];
  const std::size_t w = shape[shape.rank() - 1];
  if (!is_power_of_two(h)) {
    throw ShapeError(std::string(op) + ": height axis (axis " + std::to_string(shape.rank() - 2) +
                     ") has extent " + std::to_string(h) + ", which is not a power of two");
  }
  if (!is_power_of_two(w)) {
    throw ShapeError(std::string(op) + ": width axis (axis " + std::to_string(shape.rank() - 1) +
                     ") has extent " + std::to_string(w) + ", which is not a power of two");
  }
}

}  // namespace

template <typename T>
void transform_plane(std::span<std::complex<T>> plane, std::size_t height, std::size_t width,
                     bool inverse) {
  std::vector<std::complex<T>> scratch;
  for (std::size_t r = 0; r < height; ++r) transform_1d(plane.data() + r * width, width, 1, inverse, scratch);
  for (std::size_t c = 0; c < width; ++c) transform_1d(plane.data() + c, height, width, inverse, scratch);
  if (inverse) {
    const T norm = T(1) / static_cast<T>(height * width);
    for (auto& v : plane) v *= norm;
  }
}

template void transform_plane(std::span<std::complex<float>>, std::size_t, std::size_t, bool);
template void transform_plane(std::span<std::complex<double>>, std::size_t, std::size_t, bool);

}  // namespace fft_detail

template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& x, ExtentPolicy policy) {
  fft_detail::check_extents(x.shape(), policy, "fft2");
  const Shape& s = x.shape();
  const std::size_t h = s[s.rank() - 2], w = s[s.rank() - 1];
  const std::size_t planes = x.numel() / (h * w);
  ComplexTensor<T> out{s, std::vector<T>(x.numel()), std::vector<T>(x.numel())};
  std::vector<std::complex<T>> buf(h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = {x.data()[p * h * w + i], T(0)};
    fft_detail::transform_plane<T>(buf, h, w, false);
    for (std::size_t i = 0; i < h * w; ++i) {
      out.real[p * h * w + i] = buf[i].real();
      out.imag[p * h * w + i] = buf[i].imag();
    }
  }
  return out;
}

template <typename T>
Tensor<T> ifft2(const ComplexTensor<T>& x, ExtentPolicy policy) {
  fft_detail::check_extents(x.shape, policy, "ifft2");
  if (x.real.size() != x.shape.numel() || x.imag.size() != x.shape.numel()) {
    throw ShapeError("ifft2: real/imag lengths do not match shape " + x.shape.str());
  }
  const Shape& s = x.shape;
  const std::size_t h = s[s.rank() - 2], w = s[s.rank() - 1];
  const std::size_t planes = s.numel() / (h * w);
  std::vector<T> out(s.numel());
  std::vector<std::complex<T>> buf(h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = x.at(p * h * w + i);
    fft_detail::transform_plane<T>(buf, h, w, true);
    for (std::size_t i = 0; i < h * w; ++i) out[p * h * w + i] = buf[i].real();
  }
  return Tensor<T>::from(s, std::move(out));
}

template ComplexTensor<float> fft2(const Tensor<float>&, ExtentPolicy);
template ComplexTensor<double> fft2(const Tensor<double>&, ExtentPolicy);
template Tensor<float> ifft2(const ComplexTensor<float>&, ExtentPolicy);
template Tensor<double> ifft2(const ComplexTensor<double>&, ExtentPolicy);

}  // namespace wavray
