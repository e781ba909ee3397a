#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavray/layers.hpp"
#include "wavray/ray.hpp"
#include "wavray/wavelet.hpp"

namespace wavray {

struct BackboneConfig {
  /// Stem output followed by each extraction stage's width.
  std::vector<std::size_t> extraction{32, 48, 64};
  /// Refinement input width followed by each stage's pooled width.
  std::vector<std::size_t> refinement{64, 512, 4096};
  std::size_t blocks_per_stage = 6;
  std::size_t ray_layers_per_stage = 1;
  std::size_t origins = 12;
  std::size_t bottleneck = 4;

  static BackboneConfig table1();
  /// Small widths for CPU runs on 32x32 inputs.
  static BackboneConfig desk();

  std::size_t stem_channels() const { return extraction.front(); }
  std::size_t stages() const { return refinement.size() - 1; }
  std::size_t final_channels() const { return refinement.back(); }
  /// Total spatial reduction of the deepest map.
  std::size_t reduction() const;

  /// Throws ValueError on an inconsistent schedule.
  void validate() const;
  /// Throws ShapeError naming the extent when the input cannot be halved
  /// the required number of times.
  void validate_input(std::size_t height, std::size_t width) const;
};

/// Output of the extraction stages plus the pooled output of each
/// refinement stage, shallowest first.
template <typename T>
struct FeaturePyramid {
  Tensor<T> extraction;
  std::vector<std::pair<std::size_t, Tensor<T>>> stages;

  const Tensor<T>& deepest() const { return stages.back().second; }
};

/// Stem, extraction stages, then refinement stages of modulation blocks,
/// optional ray layers and pair-fusion pooling. Every pool except the last
/// keeps the extent; the last one halves it.
template <typename T>
class Backbone {
 public:
  /// `stage_rays[s]` ray layers are attached after the blocks of stage s.
  Backbone(const BackboneConfig& config, const std::vector<std::size_t>& stage_rays, Rng& rng);

  FeaturePyramid<T> forward(const Tensor<T>& image, std::vector<AttenuationMap<T>>* maps = nullptr) const;

  const BackboneConfig& config() const { return config_; }
  std::vector<ModulationBlock<T>>& blocks(std::size_t stage) { return stages_[stage].blocks; }
  std::vector<RayLayer<T>>& rays(std::size_t stage) { return stages_[stage].rays; }
  const std::vector<RayLayer<T>>& rays(std::size_t stage) const { return stages_[stage].rays; }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  struct Stage {
    std::vector<ModulationBlock<T>> blocks;
    std::vector<RayLayer<T>> rays;
    WavePool<T> pool;
  };

  BackboneConfig config_;
  Stem<T> stem_;
  std::vector<ExtractStage<T>> extract_;
  std::vector<Stage> stages_;
};

}  // namespace wavray
