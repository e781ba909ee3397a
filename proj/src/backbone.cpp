#include "wavray/backbone.hpp"

#include <string>

namespace wavray {

BackboneConfig BackboneConfig::table1() { return {}; }

BackboneConfig BackboneConfig::desk() {
  BackboneConfig c;
  c.extraction = {8, 12, 16};
  c.refinement = {16, 32, 64};
  c.blocks_per_stage = 2;
  return c;
}

std::size_t BackboneConfig::reduction() const {
  // stem, one halving per extraction stage, one for the last pool
  return std::size_t{1} << (extraction.size() + 1);
}

void BackboneConfig::validate() const {
  if (extraction.size() < 2) throw ValueError("backbone: extraction schedule needs at least two widths");
  if (refinement.size() < 2) throw ValueError("backbone: need at least one refinement stage");
  for (std::size_t c : extraction) {
    if (c == 0) throw ValueError("backbone: extraction widths must be positive");
  }
  for (std::size_t c : refinement) {
    if (c == 0) throw ValueError("backbone: refinement widths must be positive");
  }
  if (refinement.front() != extraction.back()) {
    throw ValueError("backbone: refinement must start at the extraction output width (" +
                     std::to_string(extraction.back()) + "), got " + std::to_string(refinement.front()));
  }
  for (std::size_t s = 0; s + 1 < refinement.size(); ++s) {
    if (refinement[s] % 4 != 0) {
      throw ValueError("backbone: refinement width " + std::to_string(refinement[s]) +
                       " must be divisible by 4");
    }
  }
  if (bottleneck != 4) throw ValueError("backbone: bottleneck reduction must be 4");
  if (origins == 0) throw ValueError("backbone: origins must be positive");
}

void BackboneConfig::validate_input(std::size_t height, std::size_t width) const {
  const std::size_t r = reduction();
  for (const auto& [name, extent] : {std::pair<const char*, std::size_t>{"height", height}, {"width", width}}) {
    if (extent < 14 || extent % r != 0) {
      throw ShapeError(std::string("backbone: input ") + name + " " + std::to_string(extent) +
                       " must be a multiple of " + std::to_string(r) + " and at least 14");
    }
  }
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, const std::vector<std::size_t>& stage_rays, Rng& rng)
    : config_(config), stem_((config.validate(), config.stem_channels()), rng) {
  if (stage_rays.size() != config.stages()) {
    throw ValueError("backbone: ray assignment covers " + std::to_string(stage_rays.size()) +
                     " stages, config has " + std::to_string(config.stages()));
  }
  for (std::size_t e = 0; e + 1 < config.extraction.size(); ++e) {
    extract_.emplace_back(config.extraction[e], config.extraction[e + 1], rng);
  }
  for (std::size_t s = 0; s < config.stages(); ++s) {
    const std::size_t width = config.refinement[s];
    std::vector<ModulationBlock<T>> blocks;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) blocks.emplace_back(width, config.bottleneck, rng);
    std::vector<RayLayer<T>> rays;
    for (std::size_t r = 0; r < stage_rays[s]; ++r) rays.emplace_back(width, config.origins, rng);
    const std::size_t stride = s + 1 == config.stages() ? 2 : 1;
    WavePool<T> pool(width, config.refinement[s + 1], stride, rng);
    stages_.push_back({std::move(blocks), std::move(rays), std::move(pool)});
  }
}

template <typename T>
FeaturePyramid<T> Backbone<T>::forward(const Tensor<T>& image, std::vector<AttenuationMap<T>>* maps) const {
  if (image.shape().rank() != 4) throw ShapeError("backbone: expected [N,3,H,W], got " + image.shape().str());
  config_.validate_input(image.dim(2), image.dim(3));
  FeaturePyramid<T> pyramid;
  Tensor<T> x = stem_.forward(image);
  for (const auto& stage : extract_) x = stage.forward(x);
  pyramid.extraction = x;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const auto& block : stages_[s].blocks) x = block.forward(x);
    for (const auto& ray : stages_[s].rays) {
      AttenuationMap<T> map;
      x = ray.forward(x, maps ? &map : nullptr);
      if (maps) maps->push_back(std::move(map));
    }
    x = stages_[s].pool.forward(x);
    pyramid.stages.emplace_back(s, x);
  }
  return pyramid;
}

template <typename T>
void Backbone<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  stem_.collect(out, prefix + ".stem");
  for (std::size_t e = 0; e < extract_.size(); ++e) extract_[e].collect(out, prefix + ".extract" + std::to_string(e));
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s);
    for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      stages_[s].blocks[b].collect(out, sp + ".block" + std::to_string(b));
    }
    for (std::size_t r = 0; r < stages_[s].rays.size(); ++r) {
      stages_[s].rays[r].collect(out, sp + ".ray" + std::to_string(r));
    }
    stages_[s].pool.collect(out, sp + ".pool");
  }
}

template struct FeaturePyramid<float>;
template struct FeaturePyramid<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace wavray
