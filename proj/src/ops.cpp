#include "wavray/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace wavray {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

/// Gradient buffer of an input, or null when the input does not need one.
template <typename T>
T* grad_of(const ImplPtr<T>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.shape().rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + t.shape().str());
  }
}

struct Broadcast {
  bool per_channel = false;
  std::size_t channels = 1;
  std::size_t inner = 1;

  std::size_t channel_of(std::size_t flat) const { return (flat / inner) % channels; }
};

template <typename T>
Broadcast plan_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return {};
  const Shape& sa = a.shape();
  if (b.shape().rank() == 1 && sa.rank() >= 2 && sa[1] == b.shape()[0]) {
    Broadcast plan;
    plan.per_channel = true;
    plan.channels = sa[1];
    for (std::size_t i = 2; i < sa.rank(); ++i) plan.inner *= sa[i];
    return plan;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + b.shape().str() + " against " +
                   sa.str() + " (only exact and per-channel [C] broadcasting is supported)");
}

template <typename T>
Tensor<T> add_impl(const Tensor<T>& a, const Tensor<T>& b, T sign, const char* op) {
  const Broadcast bc = plan_broadcast(a, b, op);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<T> out(av.size());
  if (bc.per_channel) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[bc.channel_of(i)];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>(op, a.shape(), std::move(out), {a, b},
                        [ai, bi, bc, sign](const TensorImpl<T>& o) {
                          const auto& g = o.grad;
                          if (T* ga = grad_of(ai)) {
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (T* gb = grad_of(bi)) {
                            if (bc.per_channel) {
                              for (std::size_t i = 0; i < g.size(); ++i)
                                gb[bc.channel_of(i)] += sign * g[i];
                            } else {
                              for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
                            }
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() == 1 && b.shape().rank() > 1) return add_impl(b, a, T(1), "add");
  return add_impl(a, b, T(1), "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_impl(a, b, T(-1), "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a_in, const Tensor<T>& b_in) {
  const bool swap = a_in.shape().rank() == 1 && b_in.shape().rank() > 1;
  const Tensor<T>& a = swap ? b_in : a_in;
  const Tensor<T>& b = swap ? a_in : b_in;
  const Broadcast bc = plan_broadcast(a, b, "mul");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] * bv[bc.per_channel ? bc.channel_of(i) : i];
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>("mul", a.shape(), std::move(out), {a, b},
                        [ai, bi, bc](const TensorImpl<T>& o) {
                          const auto& g = o.grad;
                          const auto& av = ai->data;
                          const auto& bv = bi->data;
                          T* ga = grad_of(ai);
                          T* gb = grad_of(bi);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const std::size_t j = bc.per_channel ? bc.channel_of(i) : i;
                            if (ga) ga[i] += g[i] * bv[j];
                            if (gb) gb[j] += g[i] * av[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  auto ai = a.impl();
  return make_result<T>("scale", a.shape(), std::move(out), {a},
                        [ai, factor](const TensorImpl<T>& o) {
                          if (T* ga = grad_of(ai)) {
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                              ga[i] += factor * o.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  }
  auto xi = x.impl();
  return make_result<T>("gelu", x.shape(), std::move(out), {x}, [xi](const TensorImpl<T>& o) {
    T* gx = grad_of(xi);
    if (!gx) return;
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const T v = xi->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      gx[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, T eps) {
  const Shape& s = x.shape();
  if (s.rank() != 2 && s.rank() != 4) {
    throw ShapeError("layer_norm: expected [N,C] or [N,C,H,W], got " + s.str());
  }
  const std::size_t n_batch = s[0];
  const std::size_t channels = s[1];
  const std::size_t spatial = s.rank() == 4 ? s[2] * s[3] : 1;
  if (gain.shape() != Shape{channels} || shift.shape() != Shape{channels}) {
    throw ShapeError("layer_norm: gain/shift must be [" + std::to_string(channels) + "], got " +
                     gain.shape().str() + " and " + shift.shape().str());
  }
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = shift.data();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(n_batch * spatial);
  std::vector<T> mu(spatial);
  std::vector<T> var(spatial);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* xb = xv.data() + n * channels * spatial;
    std::fill(mu.begin(), mu.end(), T(0));
    std::fill(var.begin(), var.end(), T(0));
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < spatial; ++p) mu[p] += xb[c * spatial + p];
    }
    for (T& m : mu) m /= T(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < spatial; ++p) {
        const T d = xb[c * spatial + p] - mu[p];
        var[p] += d * d;
      }
    }
    T* rs = rstd.data() + n * spatial;
    for (std::size_t p = 0; p < spatial; ++p) rs[p] = T(1) / std::sqrt(var[p] / T(channels) + eps);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * spatial;
      for (std::size_t p = 0; p < spatial; ++p) {
        const T h = (xb[c * spatial + p] - mu[p]) * rs[p];
        xhat[base + p] = h;
        out[base + p] = gv[c] * h + bv[c];
      }
    }
  }
  auto xi = x.impl();
  auto gi = gain.impl();
  auto si = shift.impl();
  return make_result<T>(
      "layer_norm", s, std::move(out), {x, gain, shift},
      [xi, gi, si, xhat = std::move(xhat), rstd = std::move(rstd), n_batch, channels,
       spatial](const TensorImpl<T>& o) {
        const auto& g = o.grad;
        if (T* dgain = grad_of(gi)) {
          for (std::size_t n = 0; n < n_batch; ++n)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t base = (n * channels + c) * spatial;
              for (std::size_t p = 0; p < spatial; ++p) dgain[c] += g[base + p] * xhat[base + p];
            }
        }
        if (T* dshift = grad_of(si)) {
          for (std::size_t n = 0; n < n_batch; ++n)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t base = (n * channels + c) * spatial;
              for (std::size_t p = 0; p < spatial; ++p) dshift[c] += g[base + p];
            }
        }
        T* dx = grad_of(xi);
        if (!dx) return;
        const auto& gain_v = gi->data;
        std::vector<T> m1(spatial);
        std::vector<T> m2(spatial);
        for (std::size_t n = 0; n < n_batch; ++n) {
          std::fill(m1.begin(), m1.end(), T(0));
          std::fill(m2.begin(), m2.end(), T(0));
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t p = 0; p < spatial; ++p) {
              const T gh = g[base + p] * gain_v[c];
              m1[p] += gh;
              m2[p] += gh * xhat[base + p];
            }
          }
          for (std::size_t p = 0; p < spatial; ++p) {
            m1[p] /= T(channels);
            m2[p] /= T(channels);
          }
          const T* rs = rstd.data() + n * spatial;
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t p = 0; p < spatial; ++p) {
              const T gh = g[base + p] * gain_v[c];
              dx[base + p] += rs[p] * (gh - m1[p] - xhat[base + p] * m2[p]);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1];
  const std::size_t spatial = s[2] * s[3];
  std::vector<T> out(planes, T(0));
  const auto& xv = x.data();
  for (std::size_t i = 0; i < planes; ++i) {
    T acc = 0;
    for (std::size_t p = 0; p < spatial; ++p) acc += xv[i * spatial + p];
    out[i] = acc / T(spatial);
  }
  auto xi = x.impl();
  return make_result<T>("global_avg_pool", Shape{s[0], s[1]}, std::move(out), {x},
                        [xi, planes, spatial](const TensorImpl<T>& o) {
                          T* gx = grad_of(xi);
                          if (!gx) return;
                          for (std::size_t i = 0; i < planes; ++i) {
                            const T g = o.grad[i] / T(spatial);
                            for (std::size_t p = 0; p < spatial; ++p) gx[i * spatial + p] += g;
                          }
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ: " + a.shape().str() + " x " + b.shape().str());
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                        [ai, bi, m, k, n](const TensorImpl<T>& o) {
                          const auto& g = o.grad;
                          if (T* ga = grad_of(ai)) {
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                T acc = 0;
                                for (std::size_t j = 0; j < n; ++j)
                                  acc += g[i * n + j] * bi->data[p * n + j];
                                ga[i * k + p] += acc;
                              }
                          }
                          if (T* gb = grad_of(bi)) {
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                const T aip = ai->data[i * k + p];
                                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                              }
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t batch = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: weight " + weight.shape().str() + " incompatible with input " +
                     x.shape().str());
  }
  if (bias.defined() && bias.shape() != Shape{outf}) {
    throw ShapeError("linear: bias must be [" + std::to_string(outf) + "], got " +
                     bias.shape().str());
  }
  const auto& xv = x.data();
  const auto& wv = weight.data();
  std::vector<T> out(batch * outf);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < outf; ++o) {
      T acc = bias.defined() ? bias.data()[o] : T(0);
      for (std::size_t i = 0; i < in; ++i) acc += xv[b * in + i] * wv[o * in + i];
      out[b * outf + o] = acc;
    }
  auto xi = x.impl();
  auto wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("linear", Shape{batch, outf}, std::move(out), std::move(inputs),
                        [xi, wi, bi, batch, in, outf](const TensorImpl<T>& o) {
                          const auto& g = o.grad;
                          T* gx = grad_of(xi);
                          T* gw = grad_of(wi);
                          T* gb = grad_of(bi);
                          for (std::size_t b = 0; b < batch; ++b)
                            for (std::size_t f = 0; f < outf; ++f) {
                              const T gv = g[b * outf + f];
                              if (gb) gb[f] += gv;
                              for (std::size_t i = 0; i < in; ++i) {
                                if (gx) gx[b * in + i] += gv * wi->data[f * in + i];
                                if (gw) gw[f * in + i] += gv * xi->data[b * in + i];
                              }
                            }
                        });
}

namespace {

/// Range of output positions whose input tap `offset` (= k - pad) lands in
/// [0, extent).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t offset,
                                                             std::ptrdiff_t stride,
                                                             std::ptrdiff_t extent,
                                                             std::ptrdiff_t out_extent) {
  // need 0 <= o*stride + offset < extent
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = extent - 1 - offset < 0 ? 0 : (extent - 1 - offset) / stride + 1;
  return {std::min(lo, out_extent), std::min(hi, out_extent)};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dParams& params) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  const std::size_t batch = is[0], channels = is[1], height = is[2], width = is[3];
  const std::size_t out_channels = ks[0], kh = ks[2], kw = ks[3];
  const std::size_t groups = params.groups;
  const auto [sh, sw] = params.stride;
  const auto [ph, pw] = params.padding;
  const std::string shapes = " (input " + is.str() + ", kernel " + ks.str() + ")";
  if (groups == 0 || sh == 0 || sw == 0) throw ValueError("conv2d: groups and strides must be positive");
  if (channels % groups != 0 || out_channels % groups != 0 || ks[1] != channels / groups) {
    throw ShapeError("conv2d: channel/group mismatch with groups=" + std::to_string(groups) + shapes);
  }
  if (kh > height + 2 * ph || kw > width + 2 * pw) {
    throw ShapeError("conv2d: zero-sized output, kernel larger than padded input" + shapes);
  }
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(out_channels) + "], got " +
                     bias.shape().str());
  }
  const std::size_t oh = (height + 2 * ph - kh) / sh + 1;
  const std::size_t ow = (width + 2 * pw - kw) / sw + 1;
  const std::size_t cin_g = channels / groups;
  const std::size_t cout_g = out_channels / groups;

  // Visits every (output plane, input plane, tap) triple with its valid
  // output rectangle; shared by the forward and both backward products.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t oc = 0; oc < out_channels; ++oc) {
        const std::size_t g = oc / cout_g;
        for (std::size_t icl = 0; icl < cin_g; ++icl) {
          const std::size_t ic = g * cin_g + icl;
          for (std::size_t a = 0; a < kh; ++a) {
            const auto off_h = static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(ph);
            const auto [h0, h1] = valid_range(off_h, static_cast<std::ptrdiff_t>(sh),
                                              static_cast<std::ptrdiff_t>(height),
                                              static_cast<std::ptrdiff_t>(oh));
            for (std::size_t b = 0; b < kw; ++b) {
              const auto off_w = static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(pw);
              const auto [w0, w1] = valid_range(off_w, static_cast<std::ptrdiff_t>(sw),
                                                static_cast<std::ptrdiff_t>(width),
                                                static_cast<std::ptrdiff_t>(ow));
              const std::size_t widx = ((oc * cin_g + icl) * kh + a) * kw + b;
              const std::size_t in_plane = (n * channels + ic) * height * width;
              const std::size_t out_plane = (n * out_channels + oc) * oh * ow;
              for (std::ptrdiff_t y = h0; y < h1; ++y) {
                const std::size_t in_row =
                    in_plane + static_cast<std::size_t>(y * static_cast<std::ptrdiff_t>(sh) + off_h) * width;
                const std::size_t out_row = out_plane + static_cast<std::size_t>(y) * ow;
                fn(widx, in_row, out_row, w0, w1, off_w);
              }
            }
          }
        }
      }
  };

  const auto& xv = input.data();
  const auto& kv = kernel.data();
  std::vector<T> out(batch * out_channels * oh * ow, T(0));
  if (bias.defined()) {
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t oc = 0; oc < out_channels; ++oc)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((n * out_channels + oc) * oh * ow),
                    oh * ow, bias.data()[oc]);
  }
  for_each_tap([&](std::size_t widx, std::size_t in_row, std::size_t out_row, std::ptrdiff_t w0,
                   std::ptrdiff_t w1, std::ptrdiff_t off_w) {
    const T wgt = kv[widx];
    for (std::ptrdiff_t x = w0; x < w1; ++x) {
      out[out_row + static_cast<std::size_t>(x)] +=
          wgt * xv[in_row + static_cast<std::size_t>(x * static_cast<std::ptrdiff_t>(sw) + off_w)];
    }
  });

  auto xi = input.impl();
  auto ki = kernel.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor<T>> inputs{input, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      "conv2d", Shape{batch, out_channels, oh, ow}, std::move(out), std::move(inputs),
      [xi, ki, bi, for_each_tap, sw, batch, out_channels, oh, ow](const TensorImpl<T>& o) {
        const auto& g = o.grad;
        T* gx = grad_of(xi);
        T* gk = grad_of(ki);
        if (T* gb = grad_of(bi)) {
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t oc = 0; oc < out_channels; ++oc) {
              const std::size_t base = (n * out_channels + oc) * oh * ow;
              for (std::size_t p = 0; p < oh * ow; ++p) gb[oc] += g[base + p];
            }
        }
        if (!gx && !gk) return;
        const auto& xv = xi->data;
        const auto& kv = ki->data;
        for_each_tap([&](std::size_t widx, std::size_t in_row, std::size_t out_row,
                         std::ptrdiff_t w0, std::ptrdiff_t w1, std::ptrdiff_t off_w) {
          const T wgt = kv[widx];
          T acc = 0;
          for (std::ptrdiff_t x = w0; x < w1; ++x) {
            const std::size_t src =
                in_row + static_cast<std::size_t>(x * static_cast<std::ptrdiff_t>(sw) + off_w);
            const T gv = g[out_row + static_cast<std::size_t>(x)];
            if (gx) gx[src] += wgt * gv;
            acc += gv * xv[src];
          }
          if (gk) gk[widx] += acc;
        });
      });
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input, 4, "pointwise_conv", "input");
  require_rank(weight, 4, "pointwise_conv", "weight");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws[1] != is[1] || ws[2] != 1 || ws[3] != 1) {
    throw ShapeError("pointwise_conv: channel mismatch, weight " + ws.str() + " vs input " +
                     is.str());
  }
  const std::size_t batch = is[0], channels = is[1], spatial = is[2] * is[3], out_ch = ws[0];
  if (bias.defined() && bias.shape() != Shape{out_ch}) {
    throw ShapeError("pointwise_conv: bias must be [" + std::to_string(out_ch) + "], got " +
                     bias.shape().str());
  }
  const auto& xv = input.data();
  const auto& wv = weight.data();
  std::vector<T> out(batch * out_ch * spatial);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_ch; ++o) {
      T* dst = out.data() + (n * out_ch + o) * spatial;
      std::fill_n(dst, spatial, bias.defined() ? bias.data()[o] : T(0));
      for (std::size_t c = 0; c < channels; ++c) {
        const T w = wv[o * channels + c];
        const T* src = xv.data() + (n * channels + c) * spatial;
        for (std::size_t p = 0; p < spatial; ++p) dst[p] += w * src[p];
      }
    }
  auto xi = input.impl();
  auto wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      "pointwise_conv", Shape{batch, out_ch, is[2], is[3]}, std::move(out), std::move(inputs),
      [xi, wi, bi, batch, channels, spatial, out_ch](const TensorImpl<T>& o) {
        const auto& g = o.grad;
        T* gx = grad_of(xi);
        T* gw = grad_of(wi);
        T* gb = grad_of(bi);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t f = 0; f < out_ch; ++f) {
            const T* gsrc = g.data() + (n * out_ch + f) * spatial;
            if (gb) {
              T acc = 0;
              for (std::size_t p = 0; p < spatial; ++p) acc += gsrc[p];
              gb[f] += acc;
            }
            for (std::size_t c = 0; c < channels; ++c) {
              const T* xsrc = xi->data.data() + (n * channels + c) * spatial;
              if (gw) {
                T acc = 0;
                for (std::size_t p = 0; p < spatial; ++p) acc += gsrc[p] * xsrc[p];
                gw[f * channels + c] += acc;
              }
              if (gx) {
                const T w = wi->data[f * channels + c];
                T* gdst = gx + (n * channels + c) * spatial;
                for (std::size_t p = 0; p < spatial; ++p) gdst[p] += w * gsrc[p];
              }
            }
          }
      });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit sp;
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  sp.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.shape().rank()) {
    throw ValueError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     x.shape().str());
  }
  const AxisSplit sp = split_axis(x.shape(), axis);
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = xv[base];
      for (std::size_t k = 1; k < sp.extent; ++k) mx = std::max(mx, xv[base + k * sp.inner]);
      T total = 0;
      for (std::size_t k = 0; k < sp.extent; ++k) {
        const T e = std::exp(xv[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < sp.extent; ++k) out[base + k * sp.inner] /= total;
    }
  auto xi = x.impl();
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [xi, sp](const TensorImpl<T>& o) {
    T* gx = grad_of(xi);
    if (!gx) return;
    const auto& y = o.data;
    const auto& g = o.grad;
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = a * sp.extent * sp.inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < sp.extent; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.extent; ++k) {
          const std::size_t j = base + k * sp.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.rank()) throw ValueError("concat: axis out of range for " + first.str());
  std::vector<std::size_t> dims = first.dims();
  dims[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.rank() == first.rank();
    for (std::size_t i = 0; ok && i < s.rank(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + s.str() + " incompatible with " + first.str());
    dims[axis] += s[axis];
  }
  const Shape out_shape(dims);
  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<T> out(out_shape.numel());
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * sp.extent * sp.inner + offset * sp.inner));
    }
    offset += p.dim(axis);
  }
  std::vector<ImplPtr<T>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<T>("concat", out_shape, std::move(out),
                        std::vector<Tensor<T>>(parts.begin(), parts.end()),
                        [impls, offsets, sp](const TensorImpl<T>& o) {
                          for (std::size_t k = 0; k < impls.size(); ++k) {
                            T* gp = grad_of(impls[k]);
                            if (!gp) continue;
                            const std::size_t chunk = impls[k]->data.size() / sp.outer;
                            for (std::size_t a = 0; a < sp.outer; ++a) {
                              const T* src = o.grad.data() + a * sp.extent * sp.inner + offsets[k] * sp.inner;
                              for (std::size_t i = 0; i < chunk; ++i) gp[a * chunk + i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto xi = x.impl();
  return make_result<T>("sum", Shape{}, {acc}, {x}, [xi](const TensorImpl<T>& o) {
    if (T* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += o.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.shape().rank()) {
    throw ValueError("mean_axis: axis " + std::to_string(axis) + " invalid for " + x.shape().str());
  }
  const AxisSplit sp = split_axis(x.shape(), axis);
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < x.shape().rank(); ++i)
    if (i != axis) dims.push_back(x.dim(i));
  std::vector<T> out(sp.outer * sp.inner, T(0));
  const auto& xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.extent; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[(o * sp.extent + k) * sp.inner + i];
  for (T& v : out) v /= T(sp.extent);
  auto xi = x.impl();
  return make_result<T>("mean_axis", Shape(dims), std::move(out), {x}, [xi, sp](const TensorImpl<T>& o) {
    T* gx = grad_of(xi);
    if (!gx) return;
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t k = 0; k < sp.extent; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i)
          gx[(a * sp.extent + k) * sp.inner + i] += o.grad[a * sp.inner + i] / T(sp.extent);
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  auto xi = x.impl();
  return make_result<T>("reshape", shape, x.to_vector(), {x}, [xi](const TensorImpl<T>& o) {
    if (T* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
  const Shape& s = x.shape();
  if (s.rank() != shape.rank()) throw ShapeError("expand: rank mismatch " + s.str() + " -> " + shape.str());
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (s[i] != shape[i] && s[i] != 1) throw ShapeError("expand: cannot expand " + s.str() + " to " + shape.str());
  }
  // Source index of every output element.
  const std::size_t total = shape.numel();
  std::vector<std::size_t> src(total);
  std::vector<std::size_t> src_stride(s.rank(), 1);
  for (std::size_t i = s.rank(); i-- > 1;) src_stride[i - 1] = src_stride[i] * s[i];
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    std::size_t idx = 0;
    for (std::size_t i = shape.rank(); i-- > 0;) {
      const std::size_t coord = rem % shape[i];
      rem /= shape[i];
      if (s[i] != 1) idx += coord * src_stride[i];
    }
    src[flat] = idx;
  }
  std::vector<T> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = x.data()[src[i]];
  auto xi = x.impl();
  return make_result<T>("expand", shape, std::move(out), {x},
                        [xi, src = std::move(src)](const TensorImpl<T>& o) {
                          if (T* gx = grad_of(xi)) {
                            for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += o.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> pad_edge(const Tensor<T>& x, std::size_t pad_h, std::size_t pad_w) {
  const Shape& s = x.shape();
  if (s.rank() < 2) throw ShapeError("pad_edge: need at least rank 2, got " + s.str());
  const std::size_t h = s[s.rank() - 2], w = s[s.rank() - 1];
  const std::size_t planes = x.numel() / (h * w);
  const std::size_t oh = h + 2 * pad_h, ow = w + 2 * pad_w;
  std::vector<std::size_t> dims = s.dims();
  dims[s.rank() - 2] = oh;
  dims[s.rank() - 1] = ow;
  auto clamp_index = [](std::size_t i, std::size_t pad, std::size_t n) {
    const auto v = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad);
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  std::vector<std::size_t> row_src(oh), col_src(ow);
  for (std::size_t i = 0; i < oh; ++i) row_src[i] = clamp_index(i, pad_h, h);
  for (std::size_t j = 0; j < ow; ++j) col_src[j] = clamp_index(j, pad_w, w);
  std::vector<T> out(planes * oh * ow);
  const auto& xv = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        out[(p * oh + i) * ow + j] = xv[(p * h + row_src[i]) * w + col_src[j]];
  auto xi = x.impl();
  return make_result<T>("pad_edge", Shape(dims), std::move(out), {x},
                        [xi, row_src, col_src, planes, h, w, oh, ow](const TensorImpl<T>& o) {
                          T* gx = grad_of(xi);
                          if (!gx) return;
                          for (std::size_t p = 0; p < planes; ++p)
                            for (std::size_t i = 0; i < oh; ++i)
                              for (std::size_t j = 0; j < ow; ++j)
                                gx[(p * h + row_src[i]) * w + col_src[j]] += o.grad[(p * oh + i) * ow + j];
                        });
}

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  require_rank(x, 4, "to_tokens", "input");
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), spatial = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < spatial; ++p)
        out[(n * spatial + p) * channels + c] = xv[(n * channels + c) * spatial + p];
  auto xi = x.impl();
  return make_result<T>("to_tokens", Shape{n_batch, spatial, channels}, std::move(out), {x},
                        [xi, n_batch, channels, spatial](const TensorImpl<T>& o) {
                          T* gx = grad_of(xi);
                          if (!gx) return;
                          for (std::size_t n = 0; n < n_batch; ++n)
                            for (std::size_t c = 0; c < channels; ++c)
                              for (std::size_t p = 0; p < spatial; ++p)
                                gx[(n * channels + c) * spatial + p] += o.grad[(n * spatial + p) * channels + c];
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ValueError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  const auto& xv = logits.data();
  std::vector<T> probs(xv.size());
  T loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = xv.data() + b * classes;
    const T mx = *std::max_element(row, row + classes);
    T total = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      probs[b * classes + k] = std::exp(row[k] - mx);
      total += probs[b * classes + k];
    }
    for (std::size_t k = 0; k < classes; ++k) probs[b * classes + k] /= total;
    loss += (mx + std::log(total)) - row[labels[b]];
  }
  loss /= T(batch);
  auto li = logits.impl();
  std::vector<int> label_copy(labels.begin(), labels.end());
  return make_result<T>("cross_entropy", Shape{}, {loss}, {logits},
                        [li, probs = std::move(probs), label_copy, batch, classes](const TensorImpl<T>& o) {
                          T* gl = grad_of(li);
                          if (!gl) return;
                          const T g = o.grad[0] / T(batch);
                          for (std::size_t b = 0; b < batch; ++b)
                            for (std::size_t k = 0; k < classes; ++k) {
                              const T onehot = static_cast<int>(k) == label_copy[b] ? T(1) : T(0);
                              gl[b * classes + k] += g * (probs[b * classes + k] - onehot);
                            }
                        });
}

#define WAVRAY_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> gelu(const Tensor<T>&);                                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                            const Conv2dParams&);                                            \
  template Tensor<T> pointwise_conv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                        \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> expand(const Tensor<T>&, const Shape&);                                 \
  template Tensor<T> pad_edge(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> to_tokens(const Tensor<T>&);                                            \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

WAVRAY_INSTANTIATE_OPS(float)
WAVRAY_INSTANTIATE_OPS(double)

}  // namespace wavray
