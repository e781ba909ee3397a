#include "wavray/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "wavray/backbone.hpp"
#include "wavray/model.hpp"
#include "wavray/ops.hpp"
#include "wavray/ray.hpp"
#include "wavray/wavelet.hpp"

namespace wavray {

namespace {

using TensorD = Tensor<double>;
using Forward = std::function<TensorD()>;

TensorD leaf(const Shape& shape, Rng& rng, double stddev = 1.0) {
  return normal_param<double>(shape, rng, stddev);
}

TensorD positive_leaf(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.uniform(0.5, 1.5);
  auto t = TensorD::from(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

void jitter(const ParamList<double>& params, Rng& rng, double stddev) {
  for (const auto& p : params) {
    TensorD t = p.tensor;
    for (double& v : t.mutable_data()) v += stddev * rng.normal();
  }
}

/// Projects the output onto a fixed random direction so every output entry
/// contributes to the gradient.
ProbeCase projected(ParamList<double> inputs, Forward forward, Rng& rng, std::size_t max_entries = 48) {
  Shape shape;
  {
    NoGradGuard guard;
    shape = forward().shape();
  }
  std::vector<double> w(shape.numel());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  const TensorD weights = TensorD::from(shape, std::move(w));
  ProbeCase c;
  c.inputs = std::move(inputs);
  c.loss = [forward = std::move(forward), weights] { return sum(mul(forward(), weights)); };
  c.max_entries = max_entries;
  return c;
}

template <typename Module>
ParamList<double> params_of(const Module& m) {
  ParamList<double> out;
  m.collect(out, "p");
  return out;
}

RayField<double> random_field(std::size_t n, Rng& rng) {
  RayField<double> field = RayField<double>::init(n);
  ParamList<double> params;
  field.collect(params, "field");
  jitter(params, rng, 0.3);
  return field;
}

GradProbe unary(std::string name, Shape shape, std::function<TensorD(const TensorD&)> op) {
  return {std::move(name), [shape, op](Rng& rng) {
            TensorD x = leaf(shape, rng);
            return projected({{"x", x}}, [x, op] { return op(x); }, rng);
          }};
}

GradProbe binary(std::string name, Shape a_shape, Shape b_shape,
                 std::function<TensorD(const TensorD&, const TensorD&)> op) {
  return {std::move(name), [a_shape, b_shape, op](Rng& rng) {
            TensorD a = leaf(a_shape, rng);
            TensorD b = leaf(b_shape, rng);
            return projected({{"a", a}, {"b", b}}, [a, b, op] { return op(a, b); }, rng);
          }};
}

/// Module probe: input tensor plus every parameter of the module.
template <typename Module, typename Call>
GradProbe module_probe(std::string name, Shape input, std::function<Module(Rng&)> build, Call call,
                       std::size_t max_entries = 24) {
  return {std::move(name), [input, build, call, max_entries](Rng& rng) {
            auto module = std::make_shared<Module>(build(rng));
            ParamList<double> params = params_of(*module);
            jitter(params, rng, 0.1);
            TensorD x = leaf(input, rng);
            params.insert(params.begin(), {"input", x});
            return projected(std::move(params), [module, x, call] { return call(*module, x); }, rng,
                             max_entries);
          }};
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::vector<InputError> compare_gradients(ProbeCase& c, Rng& rng, double step) {
  for (auto& p : c.inputs) p.tensor.zero_grad();
  backward(c.loss());

  auto loss_at = [&] {
    NoGradGuard guard;
    return c.loss().item();
  };

  std::vector<InputError> out;
  for (auto& p : c.inputs) {
    TensorD t = p.tensor;
    const std::size_t n = t.numel();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> picks;
    if (n <= c.max_entries) {
      for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
      for (std::size_t i = 0; i < c.max_entries; ++i) picks.push_back(static_cast<std::size_t>(rng.below(n)));
    }

    InputError err{p.name, 0.0, picks.size()};
    auto data = t.mutable_data();
    for (std::size_t i : picks) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss_at();
      data[i] = saved - step;
      const double down = loss_at();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      err.max_rel_error = std::max(err.max_rel_error, relative_error(analytic[i], numeric));
    }
    out.push_back(err);
  }
  return out;
}

ProbeReport finite_diff_check(const GradProbe& probe, std::uint64_t seed, double tolerance) {
  ProbeReport report;
  report.name = probe.name;
  Rng rng(seed);
  for (std::size_t attempt = 0; attempt <= kGradRedraws; ++attempt) {
    ProbeCase c = probe.make(rng);
    report.inputs = compare_gradients(c, rng);
    report.attempts = attempt + 1;
    report.max_rel_error = 0.0;
    for (const auto& e : report.inputs) report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < tolerance;
    if (report.passed) break;
  }
  return report;
}

GradScope parse_grad_scope(const std::string& text) {
  if (text == "op") return GradScope::kOp;
  if (text == "block") return GradScope::kBlock;
  if (text == "model") return GradScope::kModel;
  throw ValueError("unknown gradcheck scope '" + text + "' (expected op, block or model)");
}

std::vector<GradProbe> op_probes() {
  std::vector<GradProbe> p;
  p.push_back(binary("add", {2, 3, 4, 4}, {2, 3, 4, 4}, [](auto& a, auto& b) { return add(a, b); }));
  p.push_back(binary("add_channel", {2, 3, 4, 4}, {3}, [](auto& a, auto& b) { return add(a, b); }));
  p.push_back(binary("sub", {2, 3, 4}, {2, 3, 4}, [](auto& a, auto& b) { return sub(a, b); }));
  p.push_back(binary("mul", {2, 3, 4, 4}, {2, 3, 4, 4}, [](auto& a, auto& b) { return mul(a, b); }));
  p.push_back(binary("mul_channel", {2, 3, 4, 4}, {3}, [](auto& a, auto& b) { return mul(a, b); }));
  p.push_back(unary("scale", {3, 5}, [](auto& x) { return scale(x, 0.7); }));
  p.push_back(unary("gelu", {4, 6}, [](auto& x) { return gelu(x); }));
  p.push_back({"layer_norm", [](Rng& rng) {
                 TensorD x = leaf({2, 5, 3, 3}, rng);
                 TensorD g = leaf({5}, rng);
                 TensorD b = leaf({5}, rng);
                 return projected({{"x", x}, {"gain", g}, {"shift", b}}, [=] { return layer_norm(x, g, b); }, rng);
               }});
  p.push_back(unary("global_avg_pool", {2, 3, 4, 4}, [](auto& x) { return global_avg_pool(x); }));
  p.push_back(binary("matmul", {3, 4}, {4, 5}, [](auto& a, auto& b) { return matmul(a, b); }));
  p.push_back({"linear", [](Rng& rng) {
                 TensorD x = leaf({3, 4}, rng);
                 TensorD w = leaf({5, 4}, rng);
                 TensorD b = leaf({5}, rng);
                 return projected({{"x", x}, {"weight", w}, {"bias", b}}, [=] { return linear(x, w, b); }, rng);
               }});
  p.push_back({"conv2d", [](Rng& rng) {
                 TensorD x = leaf({1, 2, 6, 6}, rng);
                 TensorD k = leaf({3, 2, 3, 3}, rng);
                 TensorD b = leaf({3}, rng);
                 Conv2dParams cp{{2, 2}, {1, 1}, 1};
                 return projected({{"input", x}, {"kernel", k}, {"bias", b}},
                                  [=] { return conv2d(x, k, b, cp); }, rng);
               }});
  p.push_back({"conv2d_grouped", [](Rng& rng) {
                 TensorD x = leaf({2, 4, 5, 6}, rng);
                 TensorD k = leaf({6, 2, 3, 2}, rng);
                 Conv2dParams cp{{1, 2}, {1, 0}, 2};
                 return projected({{"input", x}, {"kernel", k}}, [=] { return conv2d(x, k, TensorD{}, cp); }, rng);
               }});
  p.push_back({"pointwise_conv", [](Rng& rng) {
                 TensorD x = leaf({2, 3, 4, 4}, rng);
                 TensorD w = leaf({5, 3, 1, 1}, rng);
                 TensorD b = leaf({5}, rng);
                 return projected({{"input", x}, {"weight", w}, {"bias", b}},
                                  [=] { return pointwise_conv(x, w, b); }, rng);
               }});
  p.push_back(unary("softmax", {7}, [](auto& x) { return softmax(x, 0); }));
  p.push_back(unary("softmax_axis1", {3, 5, 2}, [](auto& x) { return softmax(x, 1); }));
  p.push_back(binary("concat", {2, 3, 4}, {2, 2, 4}, [](auto& a, auto& b) {
    const std::vector<TensorD> parts{a, b};
    return concat<double>(parts, 1);
  }));
  p.push_back(unary("sum", {3, 4}, [](auto& x) { return sum(x); }));
  p.push_back(unary("mean", {3, 4}, [](auto& x) { return mean(x); }));
  p.push_back(unary("mean_axis", {3, 4, 2}, [](auto& x) { return mean_axis(x, 1); }));
  p.push_back(unary("reshape", {2, 6}, [](auto& x) { return reshape(x, Shape{3, 4}); }));
  p.push_back(unary("expand", {2, 1, 3}, [](auto& x) { return expand(x, Shape{2, 4, 3}); }));
  p.push_back(unary("pad_edge", {1, 2, 4, 5}, [](auto& x) { return pad_edge(x, 2, 1); }));
  p.push_back(unary("to_tokens", {2, 3, 2, 4}, [](auto& x) { return to_tokens(x); }));
  p.push_back({"cross_entropy", [](Rng& rng) {
                 TensorD logits = leaf({4, 5}, rng);
                 std::vector<int> labels(4);
                 for (int& l : labels) l = static_cast<int>(rng.below(5));
                 ProbeCase c;
                 c.inputs = {{"logits", logits}};
                 c.loss = [=] { return cross_entropy(logits, std::span<const int>(labels)); };
                 return c;
               }});
  p.push_back({"depthwise_filter", [](Rng& rng) {
                 TensorD x = leaf({1, 2, 6, 6}, rng);
                 TensorD taps = leaf({5}, rng);
                 return projected({{"x", x}, {"taps", taps}},
                                  [=] { return depthwise_filter(x, taps, FilterAxis::kHeight, 2); }, rng);
               }});
  p.push_back({"wave_decompose", [](Rng& rng) {
                 TensorD x = leaf({1, 2, 8, 8}, rng);
                 auto filters = WaveFilterPair<double>::init();
                 ParamList<double> fp;
                 filters.collect(fp, "filters");
                 jitter(fp, rng, 0.1);
                 return projected({{"x", x}, {"low", filters.low}, {"high", filters.high}}, [=] {
                   const auto b = wave_decompose(x, filters, 2);
                   const std::vector<TensorD> parts{b.ll, b.lh, b.hl, b.hh};
                   return concat<double>(parts, 1);
                 }, rng);
               }});
  p.push_back({"distance_matrix", [](Rng& rng) {
                 TensorD o = leaf({3, 2}, rng, 0.7);
                 const TensorD c = pixel_grid<double>(4, 4);
                 return projected({{"origins", o}}, [=] { return distance_matrix(o, c); }, rng);
               }});
  p.push_back({"psf", [](Rng& rng) {
                 TensorD d = positive_leaf({3, 8}, rng);
                 TensorD s = leaf({3}, rng, 0.3);
                 return projected({{"distances", d}, {"log_sigma", s}}, [=] { return psf(d, s); }, rng);
               }});
  p.push_back({"decay", [](Rng& rng) {
                 TensorD d = positive_leaf({3, 8}, rng);
                 TensorD a = leaf({3}, rng, 0.3);
                 TensorD b = leaf({1}, rng);
                 return projected({{"distances", d}, {"log_alpha", a}, {"beta", b}},
                                  [=] { return decay(d, a, b); }, rng);
               }});
  p.push_back({"attenuation", [](Rng& rng) {
                 const RayField<double> field = random_field(5, rng);
                 ParamList<double> in;
                 field.collect(in, "field");
                 return projected(std::move(in), [=] {
                   const auto map = attenuation_map(field, 4, 4);
                   const std::vector<TensorD> parts{reshape(map.per_origin, Shape{5 * 16}), map.combined};
                   return concat<double>(parts, 0);
                 }, rng);
               }});
  p.push_back({"spectral_modulate", [](Rng& rng) {
                 TensorD f = leaf({2, 3, 8, 8}, rng);
                 TensorD m = positive_leaf({8, 8}, rng);
                 return projected({{"f", f}, {"mask", m}}, [=] { return spectral_modulate(f, m); }, rng);
               }});
  return p;
}

std::vector<GradProbe> block_probes() {
  std::vector<GradProbe> p;
  p.push_back(module_probe<Stem<double>>(
      "stem", {1, 3, 14, 14}, [](Rng& rng) { return Stem<double>(4, rng); },
      [](const Stem<double>& m, const TensorD& x) { return m.forward(x); }));
  p.push_back(module_probe<ExtractStage<double>>(
      "extract_stage", {1, 4, 8, 8}, [](Rng& rng) { return ExtractStage<double>(4, 6, rng); },
      [](const ExtractStage<double>& m, const TensorD& x) { return m.forward(x); }));
  p.push_back(module_probe<ModulationBlock<double>>(
      "modulation_block", {1, 8, 8, 8}, [](Rng& rng) { return ModulationBlock<double>(8, 4, rng); },
      [](const ModulationBlock<double>& m, const TensorD& x) { return m.forward(x); }));
  p.push_back(module_probe<WavePool<double>>(
      "wave_pool", {1, 4, 8, 8}, [](Rng& rng) { return WavePool<double>(4, 8, 2, rng); },
      [](const WavePool<double>& m, const TensorD& x) { return m.forward(x); }));
  p.push_back(module_probe<RayLayer<double>>(
      "ray_layer", {1, 4, 8, 8},
      [](Rng& rng) {
        RayLayer<double> layer(4, 12, rng);
        ParamList<double> fp;
        layer.field().collect(fp, "field");
        jitter(fp, rng, 0.3);
        return layer;
      },
      [](const RayLayer<double>& m, const TensorD& x) { return m.forward(x); }));
  p.push_back(module_probe<RayEncoder<double>>(
      "ray_encoder", {1, 8, 4, 4}, [](Rng& rng) { return RayEncoder<double>(8, 4, 2, 6, rng); },
      [](const RayEncoder<double>& m, const TensorD& x) { return m.tokens(x); }));
  return p;
}

std::vector<GradProbe> model_probes() {
  std::vector<GradProbe> p;
  p.push_back(module_probe<Backbone<double>>(
      "backbone_desk", {1, 3, 32, 32},
      [](Rng& rng) { return Backbone<double>(BackboneConfig::desk(), {1, 1}, rng); },
      [](const Backbone<double>& m, const TensorD& x) { return m.forward(x).deepest(); }, 4));
  for (std::size_t rays : {0, 3}) {
    p.push_back({"classifier_desk_rays" + std::to_string(rays), [rays](Rng& rng) {
                   const ModelConfig config = ModelConfig::desk(rays);
                   auto model = std::make_shared<Classifier<double>>(config, rng);
                   ParamList<double> params = model->parameters();
                   jitter(params, rng, 0.1);
                   TensorD images = leaf({2, 3, config.input, config.input}, rng);
                   std::vector<int> labels(2);
                   for (int& l : labels) l = static_cast<int>(rng.below(config.classes));
                   params.insert(params.begin(), {"images", images});
                   ProbeCase c;
                   c.inputs = std::move(params);
                   c.loss = [model, images, labels] {
                     return cross_entropy(model->forward(images), std::span<const int>(labels));
                   };
                   c.max_entries = 4;
                   return c;
                 }});
  }
  return p;
}

std::vector<GradProbe> probes_for(GradScope scope) {
  switch (scope) {
    case GradScope::kOp:
      return op_probes();
    case GradScope::kBlock:
      return block_probes();
    case GradScope::kModel:
      return model_probes();
  }
  return {};
}

}  // namespace wavray
