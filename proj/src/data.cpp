#include "wavray/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "wavray/rng.hpp"

namespace wavray {

namespace fs = std::filesystem;

// --- files ------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// --- PNM --------------------------------------------------------------------

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) fail(std::string("oversized ") + what);
    }
    if (digits == 0) fail(std::string("missing ") + what);
    return value;
  }

  /// Exactly one whitespace byte separates the header from the raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("header not terminated by whitespace");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(origin_ + ": malformed PNM header (" + why + ")");
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& origin) {
  HeaderReader r(bytes, origin);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    r.fail("expected magic P5 or P6");
  }
  r.advance(2);
  Image img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (img.width == 0 || img.height == 0) r.fail("zero extent");
  if (maxval != 255) r.fail("maxval must be 255, got " + std::to_string(maxval));
  r.end_of_header();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - r.pos() < need) {
    throw DataError(origin + ": truncated raster, expected " + std::to_string(need) + " bytes");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos() + need));
  return img;
}

Image read_pnm(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_pnm(bytes, path.string());
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("encode_pnm: need 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DataError("encode_pnm: pixel count does not match extents");
  }
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pnm(const fs::path& path, const Image& image) {
  const auto bytes = encode_pnm(image);
  write_file_atomic(path, bytes);
}

std::vector<float> image_to_chw(const Image& image) {
  const std::size_t plane = image.width * image.height;
  std::vector<float> out(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = image.channels == 3 ? c : 0;
    for (std::size_t p = 0; p < plane; ++p) {
      out[c * plane + p] = static_cast<float>(image.pixels[p * image.channels + src]) / 255.0f;
    }
  }
  return out;
}

// --- manifest / dataset -------------------------------------------------------

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

}  // namespace

DatasetManifest read_manifest(const fs::path& manifest_path, std::size_t expected_classes) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label") {
    throw DataError(manifest_path.string() + ": first line must be the header 'path,label'");
  }
  int max_label = -1;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError(manifest_path.string() + ":" + std::to_string(row) + ": expected 'path,label'");
    }
    const std::string label_text = trim(line.substr(comma + 1));
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(label_text, &used);
      if (used != label_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(manifest_path.string() + ":" + std::to_string(row) + ": bad label '" + label_text + "'");
    }
    if (label < 0) throw DataError(manifest_path.string() + ":" + std::to_string(row) + ": negative label");
    max_label = std::max(max_label, label);
    m.entries.push_back({m.root / trim(line.substr(0, comma)), label});
  }
  if (m.entries.empty()) throw DataError(manifest_path.string() + ": no entries");

  const fs::path names = m.root / "classes.txt";
  if (fs::exists(names)) {
    std::ifstream cin(names);
    for (std::string name; std::getline(cin, name);) {
      name = trim(name);
      if (!name.empty()) m.class_names.push_back(name);
    }
  } else {
    for (int c = 0; c <= max_label; ++c) m.class_names.push_back("class" + std::to_string(c));
  }
  if (expected_classes != 0 && m.class_names.size() != expected_classes) {
    throw DataError(manifest_path.string() + ": dataset has " + std::to_string(m.class_names.size()) +
                    " classes, model expects " + std::to_string(expected_classes));
  }
  for (const auto& e : m.entries) {
    if (static_cast<std::size_t>(e.label) >= m.class_names.size()) {
      throw DataError(manifest_path.string() + ": label " + std::to_string(e.label) + " of " +
                      e.path.string() + " is out of range for " + std::to_string(m.class_names.size()) +
                      " classes");
    }
  }
  return m;
}

Dataset load_dataset(const fs::path& manifest_path, std::size_t expected_classes) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path, expected_classes);
  for (const auto& e : ds.manifest.entries) {
    if (!fs::exists(e.path)) throw DataError("missing image " + e.path.string());
    const Image img = read_pnm(e.path);
    if (ds.labels.empty()) {
      ds.height = img.height;
      ds.width = img.width;
    } else if (img.height != ds.height || img.width != ds.width) {
      throw DataError(e.path.string() + ": extent " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " differs from " + std::to_string(ds.width) + "x" +
                      std::to_string(ds.height));
    }
    const auto chw = image_to_chw(img);
    ds.pixels.insert(ds.pixels.end(), chw.begin(), chw.end());
    ds.labels.push_back(e.label);
  }
  ds.manifest.extent = ds.height == ds.width ? ds.height : 0;
  return ds;
}

template <typename T>
Tensor<T> Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t stride = 3 * height * width;
  std::vector<T> out;
  out.reserve(indices.size() * stride);
  for (std::size_t i : indices) {
    if (i >= size()) throw ValueError("dataset: index out of range");
    for (std::size_t k = 0; k < stride; ++k) out.push_back(static_cast<T>(pixels[i * stride + k]));
  }
  return Tensor<T>::from(Shape{indices.size(), 3, height, width}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

template Tensor<float> Dataset::batch<float>(std::span<const std::size_t>) const;
template Tensor<double> Dataset::batch<double>(std::span<const std::size_t>) const;

// --- synthetic data -------------------------------------------------------------

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> names{"disk", "square", "cross", "triangle",
                                              "ring", "diamond", "hbar", "vbar"};
  return names;
}

double synthetic_half_size(std::size_t extent) { return static_cast<double>(extent) / 6.0; }

double synthetic_placement_std(std::size_t extent) { return static_cast<double>(extent) / 8.0; }

namespace {

bool inside(std::size_t shape, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return ax <= 0.8 * r && ay <= 0.8 * r;
    case 2: return (ax <= r / 3 && ay <= r) || (ay <= r / 3 && ax <= r);
    case 3: return dy >= -r && dy <= r && ax <= (dy + r) / 2;
    case 4: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.25 * r * r;
    }
    case 5: return ax + ay <= r;
    case 6: return ay <= r / 3 && ax <= r;
    default: return ax <= r / 3 && ay <= r;
  }
}

double sample_center(Rng& rng, const SyntheticSpec& spec, double r) {
  const double extent = static_cast<double>(spec.extent);
  const double lo = r, hi = extent - 1.0 - r;
  if (spec.placement == Placement::kUniform) return rng.uniform(lo, hi);
  const double mid = (extent - 1.0) / 2.0;
  const double sd = synthetic_placement_std(spec.extent);
  // Truncated Gaussian by resampling until the whole shape fits.
  for (;;) {
    const double c = mid + sd * rng.normal();
    if (c >= lo && c <= hi) return c;
  }
}

}  // namespace

std::vector<SyntheticSample> synth_samples(const SyntheticSpec& spec) {
  if (spec.classes == 0 || spec.classes > synthetic_shapes().size()) {
    throw DataError("synth: " + std::to_string(spec.classes) + " classes requested, at most " +
                    std::to_string(synthetic_shapes().size()) + " shapes are available");
  }
  if (spec.per_class == 0) throw DataError("synth: images per class must be positive");
  if (spec.extent < 16) throw DataError("synth: extent must be at least 16");
  if (spec.noise < 0.0 || spec.noise > 1.0) throw DataError("synth: noise must lie in [0,1]");
  Rng rng(spec.seed);
  const double r = synthetic_half_size(spec.extent);
  const std::size_t n = spec.extent;
  std::vector<SyntheticSample> out;
  out.reserve(spec.classes * spec.per_class);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      SyntheticSample s;
      s.center_x = sample_center(rng, spec, r);
      s.center_y = sample_center(rng, spec, r);
      s.image = {n, n, 3, std::vector<std::uint8_t>(3 * n * n)};
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const bool on = inside(c, static_cast<double>(x) - s.center_x, static_cast<double>(y) - s.center_y, r);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            double v = on ? 0.9 : 0.1;
            if (spec.noise > 0.0) v += spec.noise * rng.uniform(-1.0, 1.0);
            v = std::clamp(v, 0.0, 1.0);
            s.image.pixels[(y * n + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
          }
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

fs::path synth_generate(const SyntheticSpec& spec, const fs::path& out_dir) {
  const auto samples = synth_samples(spec);
  fs::create_directories(out_dir);
  std::ostringstream manifest;
  manifest << "path,label\n";
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::size_t c = k / spec.per_class, i = k % spec.per_class;
    char name[64];
    std::snprintf(name, sizeof name, "img_%zu_%04zu.ppm", c, i);
    write_pnm(out_dir / name, samples[k].image);
    manifest << name << ',' << c << '\n';
  }
  std::ostringstream classes;
  for (std::size_t c = 0; c < spec.classes; ++c) classes << synthetic_shapes()[c] << '\n';
  auto put = [&](const fs::path& p, const std::string& text) {
    write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  };
  put(out_dir / "classes.txt", classes.str());
  put(out_dir / "manifest.csv", manifest.str());
  return out_dir / "manifest.csv";
}

}  // namespace wavray
