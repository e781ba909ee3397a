#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "wavray/layers.hpp"
#include "wavray/tensor.hpp"

namespace wavray {

/// Unit-circle placement: origin k sits at (cos(2πk/n), sin(2πk/n)).
std::vector<std::array<double, 2>> init_origins(std::size_t n);

/// Learnable ray parameters. Widths and decay rates are stored as logs so the
/// effective values stay positive whatever the optimizer does.
template <typename T>
struct RayField {
  Tensor<T> origins;    // [n,2], (x, y)
  Tensor<T> log_sigma;  // [n]
  Tensor<T> log_alpha;  // [n]
  Tensor<T> beta;       // [1], shared gain

  static RayField init(std::size_t n);

  std::size_t count() const { return origins.dim(0); }
  std::vector<T> sigma() const;
  std::vector<T> alpha() const;
  /// Mean Euclidean norm of the origins.
  double mean_radius() const;
  void collect(ParamList<T>& out, const std::string& prefix) const;
};

/// Pixel centers in [-1,1]^2 with the image center at (0,0): x follows the
/// column index, y the row index, row-major order. Returns [H*W, 2].
template <typename T>
Tensor<T> pixel_grid(std::size_t height, std::size_t width);

/// D[i,j] = ||O_i - C_j||. The gradient is taken as 0 where D = 0.
template <typename T>
Tensor<T> distance_matrix(const Tensor<T>& origins, const Tensor<T>& coords);

/// Normalized radial Gaussian exp(-D^2 / 2σ_i^2) / (2πσ_i^2) with σ = exp(log_sigma).
template <typename T>
Tensor<T> psf(const Tensor<T>& distances, const Tensor<T>& log_sigma);

/// β · exp(-α_i D) with α = exp(log_alpha).
template <typename T>
Tensor<T> decay(const Tensor<T>& distances, const Tensor<T>& log_alpha, const Tensor<T>& beta);

/// Normalization axis and origin-combination rule of the attenuation map.
/// The defaults (softmax over pixels, mean over origins) keep every row and
/// the combined map summing to one; the alternatives exist for experiments.
struct AttenuationOptions {
  enum class Normalize { kOverPixels, kOverOrigins };
  enum class Combine { kMean, kSum };

  Normalize normalize = Normalize::kOverPixels;
  Combine combine = Combine::kMean;
};

template <typename T>
struct AttenuationMap {
  Tensor<T> per_origin;  // [n, H*W]
  Tensor<T> combined;    // [H*W]
  std::size_t height = 0;
  std::size_t width = 0;
};

template <typename T>
AttenuationMap<T> attenuation(const Tensor<T>& distances, const RayField<T>& field,
                              std::size_t height, std::size_t width,
                              const AttenuationOptions& options = {});

/// Convenience: grid, distances and map for a field at the given extents.
template <typename T>
AttenuationMap<T> attenuation_map(const RayField<T>& field, std::size_t height, std::size_t width,
                                  const AttenuationOptions& options = {});

/// Placement of the mask over the spectrum. kStandard multiplies bin (h,w)
/// by mask entry (h,w); kCentered shifts the mask by half the extent so its
/// center lands on the DC bin.
enum class SpectrumLayout { kStandard, kCentered };

/// Re(ifft2(fft2(f) · M)) with a real H×W mask broadcast over batch and
/// channels. `mask` may be [H,W] or [H*W].
template <typename T>
Tensor<T> spectral_modulate(const Tensor<T>& f, const Tensor<T>& mask,
                            SpectrumLayout layout = SpectrumLayout::kStandard);

/// Pre-norm residual ray block followed by a 4x channel-mixing MLP:
///   g   = f + spectral_modulate(norm1(f), H·W · combined_map)
///   out = g + contract(gelu(expand(norm2(g))))
/// The combined map sums to one, so it is rescaled by the pixel count to make
/// a uniform map the identity filter.
template <typename T>
class RayLayer {
 public:
  RayLayer(std::size_t channels, std::size_t origins, Rng& rng,
           std::shared_ptr<RayField<T>> shared_field = nullptr);

  Tensor<T> forward(const Tensor<T>& f, AttenuationMap<T>* map_out = nullptr) const;

  const RayField<T>& field() const { return *field_; }
  RayField<T>& field() { return *field_; }
  const std::shared_ptr<RayField<T>>& field_ptr() const { return field_; }
  AttenuationOptions& options() { return options_; }
  SpectrumLayout& layout() { return layout_; }
  std::size_t channels() const { return channels_; }

  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  std::size_t channels_;
  std::shared_ptr<RayField<T>> field_;
  AttenuationOptions options_;
  SpectrumLayout layout_ = SpectrumLayout::kStandard;
  ChannelNorm<T> norm1_;
  ChannelNorm<T> norm2_;
  Pointwise<T> expand_;
  Pointwise<T> contract_;
};

/// Projection of the deepest backbone map to d_model followed by a stack of
/// ray layers.
template <typename T>
class RayEncoder {
 public:
  RayEncoder(std::size_t in_channels, std::size_t d_model, std::size_t layers, std::size_t origins,
             Rng& rng);

  /// [N,C,H,W] -> [N,d_model,H,W]. Per-layer maps are appended to `maps`.
  Tensor<T> forward(const Tensor<T>& deepest, std::vector<AttenuationMap<T>>* maps = nullptr) const;
  /// [N,C,H,W] -> [N,H*W,d_model]
  Tensor<T> tokens(const Tensor<T>& deepest, std::vector<AttenuationMap<T>>* maps = nullptr) const;

  std::size_t d_model() const { return project_.out_channels(); }
  std::vector<RayLayer<T>>& layers() { return layers_; }
  const std::vector<RayLayer<T>>& layers() const { return layers_; }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  Pointwise<T> project_;
  std::vector<RayLayer<T>> layers_;
};

}  // namespace wavray
