#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "wavray/fft.hpp"

using namespace wavray;
using testing_support::max_rel_diff;
using testing_support::random_tensor;

TEST(Fft2, ConstantMapHasOnlyDc) {
  const double c = 1.75;
  const auto spec = fft2(Tensor<double>::full(Shape{4, 8}, c));
  EXPECT_NEAR(spec.real[0], c * 32.0, 1e-12);
  EXPECT_NEAR(spec.imag[0], 0.0, 1e-12);
  for (std::size_t i = 1; i < 32; ++i) {
    EXPECT_NEAR(spec.real[i], 0.0, 1e-12);
    EXPECT_NEAR(spec.imag[i], 0.0, 1e-12);
  }
}

TEST(Fft2, RoundTrip) {
  Rng rng(1);
  const auto x = random_tensor({8, 8}, rng);
  EXPECT_LT(max_rel_diff(ifft2(fft2(x)).data(), x.data()), 1e-5);
  const auto batch = random_tensor({2, 3, 16, 4}, rng);
  EXPECT_LT(max_rel_diff(ifft2(fft2(batch)).data(), batch.data()), 1e-12);
}

TEST(Fft2, ImpulseHasFlatMagnitude) {
  auto x = Tensor<double>::zeros(Shape{8, 8});
  x.mutable_data()[0] = 1.0;
  const auto spec = fft2(x);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(std::abs(spec.at(i)), 1.0, 1e-12);
  // shifted impulse keeps unit magnitude
  auto y = Tensor<double>::zeros(Shape{8, 8});
  y.mutable_data()[19] = 1.0;
  const auto shifted = fft2(y);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(std::abs(shifted.at(i)), 1.0, 1e-12);
}

TEST(Fft2, MatchesDirectDft) {
  Rng rng(2);
  const std::size_t h = 4, w = 8;
  const auto x = random_tensor({h, w}, rng);
  const auto spec = fft2(x);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double angle = -2.0 * std::numbers::pi * (double(u * r) / h + double(v * c) / w);
          acc += x[r * w + c] * std::polar(1.0, angle);
        }
      EXPECT_NEAR(spec.real[u * w + v], acc.real(), 1e-10);
      EXPECT_NEAR(spec.imag[u * w + v], acc.imag(), 1e-10);
    }
}

TEST(Fft2, Linearity) {
  Rng rng(3);
  const auto x = random_tensor({8, 16}, rng);
  const auto y = random_tensor({8, 16}, rng);
  const double a = 0.7, b = -1.3;
  std::vector<double> mix(x.numel());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const auto lhs = fft2(Tensor<double>::from(x.shape(), mix));
  const auto fx = fft2(x), fy = fft2(y);
  std::vector<double> rhs_re(mix.size()), rhs_im(mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i) {
    rhs_re[i] = a * fx.real[i] + b * fy.real[i];
    rhs_im[i] = a * fx.imag[i] + b * fy.imag[i];
  }
  EXPECT_LT(max_rel_diff(lhs.real, rhs_re), 1e-5);
  EXPECT_LT(max_rel_diff(lhs.imag, rhs_im), 1e-5);
}

TEST(Fft2, Parseval) {
  Rng rng(4);
  const auto x = random_tensor({16, 8}, rng);
  const auto spec = fft2(x);
  double energy = 0.0, spectral = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    energy += x[i] * x[i];
    spectral += spec.real[i] * spec.real[i] + spec.imag[i] * spec.imag[i];
  }
  EXPECT_NEAR(spectral / 128.0, energy, 1e-4 * energy);
}

TEST(Fft2, NonPowerOfTwoNamesAxis) {
  try {
    fft2(Tensor<double>::zeros(Shape{2, 8, 6}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width axis"), std::string::npos) << e.what();
  }
  try {
    fft2(Tensor<double>::zeros(Shape{12, 8}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("height axis"), std::string::npos) << e.what();
  }
}

TEST(Fft2, AnyExtentPolicyRoundTrips) {
  Rng rng(5);
  const auto x = random_tensor({14, 14}, rng);
  const auto spec = fft2(x, ExtentPolicy::kAny);
  EXPECT_LT(max_rel_diff(ifft2(spec, ExtentPolicy::kAny).data(), x.data()), 1e-10);
}
