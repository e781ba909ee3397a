#include "wavray/ray.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "wavray/fft.hpp"
#include "wavray/ops.hpp"

namespace wavray {

using detail::grad_buffer;

std::vector<std::array<double, 2>> init_origins(std::size_t n) {
  if (n == 0) throw ValueError("init_origins: need at least one origin");
  std::vector<std::array<double, 2>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    out[k] = {std::cos(angle), std::sin(angle)};
  }
  return out;
}

template <typename T>
RayField<T> RayField<T>::init(std::size_t n) {
  std::vector<T> xy;
  xy.reserve(2 * n);
  for (const auto& p : init_origins(n)) {
    xy.push_back(static_cast<T>(p[0]));
    xy.push_back(static_cast<T>(p[1]));
  }
  RayField f;
  f.origins = Tensor<T>::from(Shape{n, 2}, std::move(xy));
  f.origins.set_requires_grad(true);
  f.log_sigma = constant_param<T>(Shape{n}, T(0));
  f.log_alpha = constant_param<T>(Shape{n}, T(0));
  f.beta = constant_param<T>(Shape{1}, T(1));
  return f;
}

template <typename T>
std::vector<T> RayField<T>::sigma() const {
  std::vector<T> out(count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_sigma[i]);
  return out;
}

template <typename T>
std::vector<T> RayField<T>::alpha() const {
  std::vector<T> out(count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_alpha[i]);
  return out;
}

template <typename T>
double RayField<T>::mean_radius() const {
  double total = 0.0;
  for (std::size_t i = 0; i < count(); ++i) {
    total += std::hypot(static_cast<double>(origins[2 * i]), static_cast<double>(origins[2 * i + 1]));
  }
  return total / static_cast<double>(count());
}

template <typename T>
void RayField<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".origins", origins});
  out.push_back({prefix + ".log_sigma", log_sigma});
  out.push_back({prefix + ".log_alpha", log_alpha});
  out.push_back({prefix + ".beta", beta});
}

template <typename T>
Tensor<T> pixel_grid(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("pixel_grid: extents must be positive");
  auto coord = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::vector<T> xy(2 * height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      xy[2 * (r * width + c)] = static_cast<T>(coord(c, width));
      xy[2 * (r * width + c) + 1] = static_cast<T>(coord(r, height));
    }
  }
  return Tensor<T>::from(Shape{height * width, 2}, std::move(xy));
}

template <typename T>
Tensor<T> distance_matrix(const Tensor<T>& origins, const Tensor<T>& coords) {
  if (origins.shape().rank() != 2 || origins.dim(1) != 2) {
    throw ShapeError("distance_matrix: origins must be [n,2], got " + origins.shape().str());
  }
  if (coords.shape().rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("distance_matrix: coords must be [HW,2], got " + coords.shape().str());
  }
  const std::size_t n = origins.dim(0), m = coords.dim(0);
  const auto o = origins.data();
  const auto c = coords.data();
  std::vector<T> d(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const T dx = o[2 * i] - c[2 * j];
      const T dy = o[2 * i + 1] - c[2 * j + 1];
      d[i * m + j] = std::sqrt(dx * dx + dy * dy);
    }
  }
  auto oi = origins.impl();
  auto ci = coords.impl();
  return make_result<T>("distance_matrix", Shape{n, m}, std::move(d), {origins, coords},
                        [oi, ci, n, m](const TensorImpl<T>& out) {
                          T* go = grad_buffer(oi);
                          T* gc = grad_buffer(ci);
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t j = 0; j < m; ++j) {
                              const T dist = out.data[i * m + j];
                              if (dist == T(0)) continue;
                              const T g = out.grad[i * m + j] / dist;
                              const T dx = (oi->data[2 * i] - ci->data[2 * j]) * g;
                              const T dy = (oi->data[2 * i + 1] - ci->data[2 * j + 1]) * g;
                              if (go) {
                                go[2 * i] += dx;
                                go[2 * i + 1] += dy;
                              }
                              if (gc) {
                                gc[2 * j] -= dx;
                                gc[2 * j + 1] -= dy;
                              }
                            }
                          }
                        });
}

namespace {

template <typename T>
void check_per_origin(const Tensor<T>& d, const Tensor<T>& p, const char* op, const char* what) {
  if (d.shape().rank() != 2) throw ShapeError(std::string(op) + ": distances must be [n,HW]");
  if (p.shape() != Shape{d.dim(0)}) {
    throw ShapeError(std::string(op) + ": " + what + " must be [" + std::to_string(d.dim(0)) +
                     "], got " + p.shape().str());
  }
}

}  // namespace

template <typename T>
Tensor<T> psf(const Tensor<T>& distances, const Tensor<T>& log_sigma) {
  check_per_origin(distances, log_sigma, "psf", "log_sigma");
  const std::size_t n = distances.dim(0), m = distances.dim(1);
  std::vector<T> k(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const T var = std::exp(T(2) * log_sigma[i]);
    const T norm = T(1) / (T(2) * std::numbers::pi_v<T> * var);
    for (std::size_t j = 0; j < m; ++j) {
      const T dist = distances[i * m + j];
      k[i * m + j] = norm * std::exp(-dist * dist / (T(2) * var));
    }
  }
  auto di = distances.impl();
  auto si = log_sigma.impl();
  return make_result<T>("psf", Shape{n, m}, std::move(k), {distances, log_sigma},
                        [di, si, n, m](const TensorImpl<T>& out) {
                          T* gd = grad_buffer(di);
                          T* gs = grad_buffer(si);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T var = std::exp(T(2) * si->data[i]);
                            for (std::size_t j = 0; j < m; ++j) {
                              const std::size_t idx = i * m + j;
                              const T dist = di->data[idx];
                              const T gk = out.grad[idx] * out.data[idx];
                              if (gd) gd[idx] -= gk * dist / var;
                              if (gs) gs[i] += gk * (dist * dist / var - T(2));
                            }
                          }
                        });
}

template <typename T>
Tensor<T> decay(const Tensor<T>& distances, const Tensor<T>& log_alpha, const Tensor<T>& beta) {
  check_per_origin(distances, log_alpha, "decay", "log_alpha");
  if (beta.shape() != Shape{1}) throw ShapeError("decay: beta must be [1], got " + beta.shape().str());
  const std::size_t n = distances.dim(0), m = distances.dim(1);
  const T b = beta[0];
  // Stored without β so the backward pass can reuse it for dβ.
  std::vector<T> unit(n * m);
  std::vector<T> q(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const T a = std::exp(log_alpha[i]);
    for (std::size_t j = 0; j < m; ++j) {
      unit[i * m + j] = std::exp(-a * distances[i * m + j]);
      q[i * m + j] = b * unit[i * m + j];
    }
  }
  auto di = distances.impl();
  auto ai = log_alpha.impl();
  auto bi = beta.impl();
  return make_result<T>("decay", Shape{n, m}, std::move(q), {distances, log_alpha, beta},
                        [di, ai, bi, n, m, unit = std::move(unit)](const TensorImpl<T>& out) {
                          T* gd = grad_buffer(di);
                          T* ga = grad_buffer(ai);
                          T* gb = grad_buffer(bi);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T a = std::exp(ai->data[i]);
                            for (std::size_t j = 0; j < m; ++j) {
                              const std::size_t idx = i * m + j;
                              const T gq = out.grad[idx] * out.data[idx];
                              if (gd) gd[idx] -= gq * a;
                              if (ga) ga[i] -= gq * a * di->data[idx];
                              if (gb) gb[0] += out.grad[idx] * unit[idx];
                            }
                          }
                        });
}

template <typename T>
AttenuationMap<T> attenuation(const Tensor<T>& distances, const RayField<T>& field,
                              std::size_t height, std::size_t width,
                              const AttenuationOptions& options) {
  if (distances.shape() != Shape{field.count(), height * width}) {
    throw ShapeError("attenuation: distances " + distances.shape().str() + " do not match " +
                     std::to_string(field.count()) + " origins on a " + std::to_string(height) +
                     "x" + std::to_string(width) + " grid");
  }
  const Tensor<T> logits = mul(psf(distances, field.log_sigma), decay(distances, field.log_alpha, field.beta));
  const bool over_pixels = options.normalize == AttenuationOptions::Normalize::kOverPixels;
  AttenuationMap<T> map;
  map.per_origin = softmax(logits, over_pixels ? 1 : 0);
  map.combined = mean_axis(map.per_origin, 0);
  if (options.combine == AttenuationOptions::Combine::kSum) {
    map.combined = scale(map.combined, static_cast<T>(field.count()));
  }
  map.height = height;
  map.width = width;
  return map;
}

template <typename T>
AttenuationMap<T> attenuation_map(const RayField<T>& field, std::size_t height, std::size_t width,
                                  const AttenuationOptions& options) {
  const Tensor<T> d = distance_matrix(field.origins, pixel_grid<T>(height, width));
  return attenuation(d, field, height, width, options);
}

namespace {

/// Frequency bin that mask entry i multiplies.
std::vector<std::size_t> mask_bins(std::size_t h, std::size_t w, SpectrumLayout layout) {
  std::vector<std::size_t> bins(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (layout == SpectrumLayout::kCentered) {
        bins[r * w + c] = ((r + h - h / 2) % h) * w + (c + w - w / 2) % w;
      } else {
        bins[r * w + c] = r * w + c;
      }
    }
  }
  return bins;
}

}  // namespace

template <typename T>
Tensor<T> spectral_modulate(const Tensor<T>& f, const Tensor<T>& mask, SpectrumLayout layout) {
  const Shape& s = f.shape();
  if (s.rank() != 4) throw ShapeError("spectral_modulate: expected [N,C,H,W], got " + s.str());
  const std::size_t h = s[2], w = s[3], plane = h * w;
  if (mask.numel() != plane) {
    throw ShapeError("spectral_modulate: mask " + mask.shape().str() + " does not cover a " +
                     std::to_string(h) + "x" + std::to_string(w) + " map");
  }
  const std::size_t planes = s.numel() / plane;
  std::vector<T> out(s.numel());
  std::vector<std::complex<T>> buf(plane);
  const auto bins = mask_bins(h, w, layout);
  std::vector<T> m(plane);
  for (std::size_t i = 0; i < plane; ++i) m[bins[i]] = mask[i];
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) buf[i] = {f.data()[p * plane + i], T(0)};
    fft_detail::transform_plane<T>(buf, h, w, false);
    for (std::size_t i = 0; i < plane; ++i) buf[i] *= m[i];
    fft_detail::transform_plane<T>(buf, h, w, true);
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] = buf[i].real();
  }
  auto fi = f.impl();
  auto mi = mask.impl();
  return make_result<T>(
      "spectral_modulate", s, std::move(out), {f, mask},
      [fi, mi, h, w, plane, planes, bins, m](const TensorImpl<T>& o) {
        T* gf = grad_buffer(fi);
        T* gm = grad_buffer(mi);
        std::vector<std::complex<T>> g(plane);
        std::vector<std::complex<T>> x(plane);
        const T inv = T(1) / static_cast<T>(plane);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < plane; ++i) g[i] = {o.grad[p * plane + i], T(0)};
          fft_detail::transform_plane<T>(g, h, w, false);
          if (gm) {
            for (std::size_t i = 0; i < plane; ++i) x[i] = {fi->data[p * plane + i], T(0)};
            fft_detail::transform_plane<T>(x, h, w, false);
            for (std::size_t i = 0; i < plane; ++i) {
              gm[i] += (x[bins[i]] * std::conj(g[bins[i]])).real() * inv;
            }
          }
          if (gf) {
            // The operator is self-adjoint for a real mask.
            for (std::size_t i = 0; i < plane; ++i) g[i] *= m[i];
            fft_detail::transform_plane<T>(g, h, w, true);
            for (std::size_t i = 0; i < plane; ++i) gf[p * plane + i] += g[i].real();
          }
        }
      });
}

// --- RayLayer ---------------------------------------------------------------

template <typename T>
RayLayer<T>::RayLayer(std::size_t channels, std::size_t origins, Rng& rng,
                      std::shared_ptr<RayField<T>> shared_field)
    : channels_(channels),
      field_(shared_field ? std::move(shared_field)
                          : std::make_shared<RayField<T>>(RayField<T>::init(origins))),
      norm1_(ChannelNorm<T>::init(channels)),
      norm2_(ChannelNorm<T>::init(channels)),
      expand_(Pointwise<T>::init(channels, 4 * channels, rng)),
      contract_(Pointwise<T>::init(4 * channels, channels, rng)) {}

template <typename T>
Tensor<T> RayLayer<T>::forward(const Tensor<T>& f, AttenuationMap<T>* map_out) const {
  if (f.shape().rank() != 4 || f.dim(1) != channels_) {
    throw ShapeError("ray_layer: expected " + std::to_string(channels_) + " channels, got " +
                     f.shape().str());
  }
  const std::size_t h = f.dim(2), w = f.dim(3);
  AttenuationMap<T> map = attenuation_map(*field_, h, w, options_);
  const Tensor<T> mask = scale(map.combined, static_cast<T>(h * w));
  const Tensor<T> g = add(f, spectral_modulate(norm1_(f), mask, layout_));
  const Tensor<T> out = add(g, contract_(gelu(expand_(norm2_(g)))));
  if (map_out) *map_out = std::move(map);
  return out;
}

template <typename T>
void RayLayer<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  field_->collect(out, prefix + ".field");
  norm1_.collect(out, prefix + ".norm1");
  norm2_.collect(out, prefix + ".norm2");
  expand_.collect(out, prefix + ".expand");
  contract_.collect(out, prefix + ".contract");
}

// --- RayEncoder ---------------------------------------------------------------

template <typename T>
RayEncoder<T>::RayEncoder(std::size_t in_channels, std::size_t d_model, std::size_t layers,
                          std::size_t origins, Rng& rng)
    : project_(Pointwise<T>::init(in_channels, d_model, rng)) {
  layers_.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i) layers_.emplace_back(d_model, origins, rng);
}

template <typename T>
Tensor<T> RayEncoder<T>::forward(const Tensor<T>& deepest, std::vector<AttenuationMap<T>>* maps) const {
  Tensor<T> x = project_(deepest);
  for (const auto& layer : layers_) {
    AttenuationMap<T> map;
    x = layer.forward(x, maps ? &map : nullptr);
    if (maps) maps->push_back(std::move(map));
  }
  return x;
}

template <typename T>
Tensor<T> RayEncoder<T>::tokens(const Tensor<T>& deepest, std::vector<AttenuationMap<T>>* maps) const {
  return to_tokens(forward(deepest, maps));
}

template <typename T>
void RayEncoder<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  project_.collect(out, prefix + ".proj");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(out, prefix + ".ray" + std::to_string(i));
  }
}

#define WAVRAY_INSTANTIATE_RAY(T)                                                              \
  template struct RayField<T>;                                                                 \
  template Tensor<T> pixel_grid<T>(std::size_t, std::size_t);                                  \
  template Tensor<T> distance_matrix(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> psf(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> decay(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template AttenuationMap<T> attenuation(const Tensor<T>&, const RayField<T>&, std::size_t,    \
                                         std::size_t, const AttenuationOptions&);              \
  template AttenuationMap<T> attenuation_map(const RayField<T>&, std::size_t, std::size_t,     \
                                             const AttenuationOptions&);                       \
  template Tensor<T> spectral_modulate(const Tensor<T>&, const Tensor<T>&, SpectrumLayout);                    \
  template class RayLayer<T>;                                                                  \
  template class RayEncoder<T>;

WAVRAY_INSTANTIATE_RAY(float)
WAVRAY_INSTANTIATE_RAY(double)

}  // namespace wavray
