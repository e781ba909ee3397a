#include "wavray/model.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "wavray/ops.hpp"

namespace wavray {

ModelConfig ModelConfig::table1(std::size_t rays) {
  ModelConfig c;
  c.rays = rays;
  return c;
}

ModelConfig ModelConfig::desk(std::size_t rays) {
  ModelConfig c;
  c.backbone = BackboneConfig::desk();
  c.rays = rays;
  c.d_model = 32;
  c.classes = 3;
  c.input = 32;
  return c;
}

void ModelConfig::validate() const {
  backbone.validate();
  if (rays > 3) throw ValueError("model: rays must be in 0..3, got " + std::to_string(rays));
  if (d_model == 0) throw ValueError("model: d_model must be positive");
  if (classes == 0) throw ValueError("model: classes must be positive");
  backbone.validate_input(input, input);
}

std::pair<std::vector<std::size_t>, std::size_t> ModelConfig::ray_assignment() const {
  std::vector<std::size_t> stage(backbone.stages(), 0);
  std::size_t left = rays;
  for (auto& s : stage) {
    s = std::min(backbone.ray_layers_per_stage, left);
    left -= s;
  }
  return {stage, left};
}

template <typename T>
Classifier<T>::Classifier(const ModelConfig& config, Rng& rng)
    : config_((config.validate(), config)),
      backbone_(config.backbone, config.ray_assignment().first, rng),
      encoder_(config.backbone.final_channels(), config.d_model, config.ray_assignment().second,
               config.backbone.origins, rng),
      head_(Linear<T>::init(config.d_model, config.classes, rng)) {}

template <typename T>
Tensor<T> Classifier<T>::forward(const Tensor<T>& images, std::vector<AttenuationMap<T>>* maps) const {
  if (images.shape().rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.input ||
      images.dim(3) != config_.input) {
    throw ShapeError("classifier: expected [N,3," + std::to_string(config_.input) + "," +
                     std::to_string(config_.input) + "], got " + images.shape().str());
  }
  const FeaturePyramid<T> pyramid = backbone_.forward(images, maps);
  return head_(global_avg_pool(encoder_.forward(pyramid.deepest(), maps)));
}

template <typename T>
ParamList<T> Classifier<T>::parameters() const {
  ParamList<T> all;
  backbone_.collect(all, "backbone");
  encoder_.collect(all, "encoder");
  head_.collect(all, "head");
  ParamList<T> unique;
  std::set<const TensorImpl<T>*> seen;
  for (auto& p : all) {
    if (seen.insert(p.tensor.impl().get()).second) unique.push_back(std::move(p));
  }
  return unique;
}

template <typename T>
std::vector<const RayField<T>*> Classifier<T>::ray_fields() const {
  std::vector<const RayField<T>*> out;
  for (std::size_t s = 0; s < config_.backbone.stages(); ++s) {
    for (const auto& layer : backbone_.rays(s)) out.push_back(&layer.field());
  }
  for (const auto& layer : encoder_.layers()) out.push_back(&layer.field());
  return out;
}

std::string module_of(const std::string& param_name) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = param_name.find('.', start);
    parts.push_back(param_name.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  auto strip_index = [](std::string s) {
    while (!s.empty() && std::isdigit(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
  };
  std::string label = parts[0];
  std::size_t i = 1;
  if (i < parts.size() && parts[i].rfind("stage", 0) == 0) label += "." + parts[i++];
  if (i < parts.size() - 1) {
    const std::string base = strip_index(parts[i]);
    label += "." + (base == parts[i] ? base : base + "s");
  }
  return label;
}

ParamReport param_count(const ModelConfig& config) {
  Rng rng(0);
  const Classifier<float> model(config, rng);
  ParamReport report;
  for (const auto& p : model.parameters()) {
    const std::string group = module_of(p.name);
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const auto& g) { return g.first == group; });
    if (it == report.groups.end()) {
      report.groups.emplace_back(group, 0);
      it = std::prev(report.groups.end());
    }
    it->second += p.tensor.numel();
    report.total += p.tensor.numel();
  }
  return report;
}

template class Classifier<float>;
template class Classifier<double>;

}  // namespace wavray
