#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavray/rng.hpp"
#include "wavray/tensor.hpp"

namespace testing_support {

template <typename T = double>
wavray::Tensor<T> random_tensor(const wavray::Shape& shape, wavray::Rng& rng, bool grad = false) {
  std::vector<T> v(shape.numel());
  for (T& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  auto t = wavray::Tensor<T>::from(shape, std::move(v));
  t.set_requires_grad(grad);
  return t;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, tiny)
template <typename A, typename B>
double max_rel_diff(const A& a, const B& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    den = std::max(den, std::abs(static_cast<double>(b[i])));
  }
  return num / std::max(den, 1e-300);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wavray_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
