#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "wavray/tensor.hpp"

namespace wavray {

/// Split-storage complex tensor; real and imag share `shape`.
template <typename T>
struct ComplexTensor {
  Shape shape;
  std::vector<T> real;
  std::vector<T> imag;

  std::complex<T> at(std::size_t flat) const { return {real[flat], imag[flat]}; }
};

enum class ExtentPolicy {
  kPowerOfTwo,  // radix-2 only; other extents are rejected
  kAny,         // radix-2 where possible, direct DFT along other axes
};

/// Unnormalized 2-D DFT over the two trailing axes of `x`.
template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& x, ExtentPolicy policy = ExtentPolicy::kPowerOfTwo);

/// Inverse of fft2 including the 1/(H*W) factor; returns the real part.
template <typename T>
Tensor<T> ifft2(const ComplexTensor<T>& x, ExtentPolicy policy = ExtentPolicy::kPowerOfTwo);

namespace fft_detail {

bool is_power_of_two(std::size_t n);

/// In-place 2-D transform of one row-major height x width plane. The inverse
/// direction includes the 1/(height*width) factor.
template <typename T>
void transform_plane(std::span<std::complex<T>> plane, std::size_t height, std::size_t width,
                     bool inverse);

}  // namespace fft_detail

}  // namespace wavray
