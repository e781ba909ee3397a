#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavray/tensor.hpp"

namespace wavray {

/// Missing files, malformed headers, extent or label problems.
class DataError : public Error {
 public:
  using Error::Error;
};

/// 8-bit raster with interleaved channels (1 for PGM, 3 for PPM).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P5/P6 with maxval 255; '#' comments are allowed in the header.
Image read_pnm(const std::filesystem::path& path);
Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& origin);
std::vector<std::uint8_t> encode_pnm(const Image& image);
void write_pnm(const std::filesystem::path& path, const Image& image);

/// Channel-first floats in [0,1]; grayscale is replicated to three channels.
std::vector<float> image_to_chw(const Image& image);

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest directory
  int label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::size_t extent = 0;
};

/// Decoded images held as one [N,3,H,W] float block.
struct Dataset {
  DatasetManifest manifest;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t classes() const { return manifest.class_names.size(); }

  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
};

/// Reads `path,label` rows. Class names come from classes.txt next to the
/// manifest when present, otherwise from the largest label. A nonzero
/// `expected_classes` must match.
DatasetManifest read_manifest(const std::filesystem::path& manifest_path, std::size_t expected_classes = 0);
Dataset load_dataset(const std::filesystem::path& manifest_path, std::size_t expected_classes = 0);

enum class Placement { kCenterBiased, kUniform };

struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t per_class = 64;
  std::size_t extent = 32;
  Placement placement = Placement::kCenterBiased;
  double noise = 0.1;  // uniform noise amplitude as a fraction of full scale
  std::uint64_t seed = 0;
};

/// Shape names in class order; the class count cannot exceed this list.
const std::vector<std::string>& synthetic_shapes();

/// Half-size of the rendered shape and the placement standard deviation
/// for a given extent.
double synthetic_half_size(std::size_t extent);
double synthetic_placement_std(std::size_t extent);

/// Renders one noiseless-or-noisy sample; exposed for tests.
struct SyntheticSample {
  Image image;
  double center_x = 0.0;
  double center_y = 0.0;
};

/// Writes img_<class>_<index>.ppm files, manifest.csv and classes.txt into
/// `out_dir`. Returns the manifest path.
std::filesystem::path synth_generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir);
std::vector<SyntheticSample> synth_samples(const SyntheticSpec& spec);

/// Atomic write through a temporary file in the same directory.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace wavray
