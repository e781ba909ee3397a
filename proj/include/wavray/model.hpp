#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavray/backbone.hpp"
#include "wavray/layers.hpp"
#include "wavray/ray.hpp"

namespace wavray {

struct ModelConfig {
  BackboneConfig backbone;
  /// Total ray layers, filled in order: one per refinement stage, then the encoder.
  std::size_t rays = 0;
  std::size_t d_model = 256;
  std::size_t classes = 1000;
  std::size_t input = 224;

  static ModelConfig table1(std::size_t rays);
  static ModelConfig desk(std::size_t rays);

  void validate() const;
  /// Per-stage ray layers and the number left for the encoder.
  std::pair<std::vector<std::size_t>, std::size_t> ray_assignment() const;
};

/// Backbone, projection to d_model, optional encoder ray layers, global
/// average pool and a linear head.
template <typename T>
class Classifier {
 public:
  Classifier(const ModelConfig& config, Rng& rng);

  /// images [N,3,H,W] -> logits [N,classes]. Attenuation maps of every ray
  /// layer, in network order, are appended to `maps`.
  Tensor<T> forward(const Tensor<T>& images, std::vector<AttenuationMap<T>>* maps = nullptr) const;

  /// Every learnable tensor once, in a fixed order. Shared storage is listed
  /// under its first name only.
  ParamList<T> parameters() const;
  /// Fields of every ray layer in network order (shared fields repeat).
  std::vector<const RayField<T>*> ray_fields() const;

  const ModelConfig& config() const { return config_; }
  Backbone<T>& backbone() { return backbone_; }
  RayEncoder<T>& encoder() { return encoder_; }
  Linear<T>& head() { return head_; }

 private:
  ModelConfig config_;
  Backbone<T> backbone_;
  RayEncoder<T> encoder_;
  Linear<T> head_;
};

struct ParamReport {
  std::vector<std::pair<std::string, std::size_t>> groups;  // module -> scalars
  std::size_t total = 0;
};

/// Exact learnable-scalar count per module.
ParamReport param_count(const ModelConfig& config);

/// Module label of a hierarchical parameter name, e.g.
/// "backbone.stage1.block3.value.weight" -> "backbone.stage1.blocks".
std::string module_of(const std::string& param_name);

}  // namespace wavray
