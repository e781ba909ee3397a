#include "wavray/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace wavray {

template <typename T>
Image scale_to_gray(std::span<const T> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw ShapeError("export: map size does not match its extents");
  double lo = INFINITY, hi = -INFINITY;
  for (T v : values) {
    if (!std::isfinite(static_cast<double>(v))) throw ValueError("export: map holds non-finite values");
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  Image img{width, height, 1, std::vector<std::uint8_t>(values.size(), 128)};
  if (!(hi > lo)) return img;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double unit = (static_cast<double>(values[i]) - lo) / (hi - lo);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(unit * 255.0));
  }
  return img;
}

template <typename T>
void export_map(std::span<const T> values, std::size_t height, std::size_t width,
                const std::filesystem::path& path) {
  write_pnm(path, scale_to_gray(values, height, width));
}

template <typename T>
std::size_t export_attenuation(const AttenuationMap<T>& map, std::size_t layer,
                               const std::filesystem::path& out_dir) {
  const std::size_t plane = map.height * map.width;
  const std::string prefix = "layer" + std::to_string(layer);
  export_map(map.combined.data(), map.height, map.width, out_dir / (prefix + "_combined.pgm"));
  const std::size_t n = map.per_origin.dim(0);
  for (std::size_t k = 0; k < n; ++k) {
    export_map(map.per_origin.data().subspan(k * plane, plane), map.height, map.width,
               out_dir / (prefix + "_origin" + std::to_string(k) + ".pgm"));
  }
  return n + 1;
}

template <typename T>
std::vector<OriginRow> origin_rows(std::size_t epoch, const std::vector<const RayField<T>*>& fields) {
  std::vector<OriginRow> rows;
  std::size_t index = 0;
  for (const RayField<T>* f : fields) {
    for (std::size_t k = 0; k < f->count(); ++k) {
      rows.push_back({epoch, index++, static_cast<double>(f->origins[2 * k]),
                      static_cast<double>(f->origins[2 * k + 1])});
    }
  }
  return rows;
}

std::string origin_csv_header() { return "epoch,origin_index,x,y"; }

std::string origin_csv_lines(const std::vector<OriginRow>& rows) {
  std::string out;
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g\n", r.epoch, r.index, r.x, r.y);
    out += buf;
  }
  return out;
}

#define WAVRAY_INSTANTIATE_EXPORT(T)                                                             \
  template Image scale_to_gray(std::span<const T>, std::size_t, std::size_t);                    \
  template void export_map(std::span<const T>, std::size_t, std::size_t,                         \
                           const std::filesystem::path&);                                        \
  template std::size_t export_attenuation(const AttenuationMap<T>&, std::size_t,                 \
                                          const std::filesystem::path&);                         \
  template std::vector<OriginRow> origin_rows(std::size_t, const std::vector<const RayField<T>*>&);

WAVRAY_INSTANTIATE_EXPORT(float)
WAVRAY_INSTANTIATE_EXPORT(double)

}  // namespace wavray
