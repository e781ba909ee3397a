#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "wavray/data.hpp"

using namespace wavray;
using testing_support::scratch_dir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> raster) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST(Pnm, WhiteColorImage) {
  const auto img = decode_pnm(bytes_of("P6\n2 2\n255\n", std::vector<std::uint8_t>(12, 255)), "white");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.channels, 3u);
  const auto chw = image_to_chw(img);
  ASSERT_EQ(chw.size(), 12u);
  for (float v : chw) EXPECT_EQ(v, 1.0f);
}

TEST(Pnm, GrayIsReplicated) {
  const auto img = decode_pnm(bytes_of("P5\n# comment\n3 1\n255\n", {0, 51, 255}), "gray");
  const auto chw = image_to_chw(img);
  ASSERT_EQ(chw.size(), 9u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(chw[c * 3 + 0], 0.0f);
    EXPECT_FLOAT_EQ(chw[c * 3 + 1], 0.2f);
    EXPECT_EQ(chw[c * 3 + 2], 1.0f);
  }
}

TEST(Pnm, ChannelFirstLayout) {
  // One pixel red, one blue.
  const auto chw = image_to_chw(decode_pnm(bytes_of("P6 2 1 255\n", {255, 0, 0, 0, 0, 255}), "rb"));
  EXPECT_EQ(chw, (std::vector<float>{1, 0, 0, 0, 0, 1}));
}

TEST(Pnm, MalformedInputs) {
  EXPECT_THROW(decode_pnm(bytes_of("P3\n1 1\n255\n", {0, 0, 0}), "ascii"), DataError);
  EXPECT_THROW(decode_pnm(bytes_of("P6\n2 2\n255\n", {1, 2, 3}), "short"), DataError);
  EXPECT_THROW(decode_pnm(bytes_of("P5\n1 1\n65535\n", {0, 0}), "deep"), DataError);
}

TEST(Pnm, GrayRoundTripIsLossless) {
  Image img{4, 3, 1, {}};
  for (std::size_t i = 0; i < 12; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 21));
  const auto back = decode_pnm(encode_pnm(img), "rt");
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.width, 4u);
  EXPECT_EQ(back.height, 3u);
}

TEST(Manifest, LabelOutOfRange) {
  const auto dir = scratch_dir("manifest_range");
  write_text(dir / "manifest.csv", "path,label\na.ppm,7\n");
  write_text(dir / "classes.txt", "a\nb\nc\nd\ne\n");
  EXPECT_THROW(read_manifest(dir / "manifest.csv"), DataError);
}

TEST(Manifest, ClassCountMustMatch) {
  const auto dir = scratch_dir("manifest_classes");
  write_text(dir / "manifest.csv", "path,label\na.ppm,0\nb.ppm,1\n");
  EXPECT_EQ(read_manifest(dir / "manifest.csv").class_names.size(), 2u);
  EXPECT_THROW(read_manifest(dir / "manifest.csv", 3), DataError);
}

TEST(Manifest, MissingFilesAndBadRows) {
  const auto dir = scratch_dir("manifest_bad");
  EXPECT_THROW(read_manifest(dir / "absent.csv"), DataError);
  write_text(dir / "m1.csv", "file,label\na.ppm,0\n");
  EXPECT_THROW(read_manifest(dir / "m1.csv"), DataError);
  write_text(dir / "m2.csv", "path,label\na.ppm,x\n");
  EXPECT_THROW(read_manifest(dir / "m2.csv"), DataError);
  write_text(dir / "m3.csv", "path,label\nmissing.ppm,0\n");
  EXPECT_THROW(load_dataset(dir / "m3.csv"), DataError);
}

TEST(Synth, GeneratesLoadableDataset) {
  const auto dir = scratch_dir("synth_load");
  SyntheticSpec spec;
  const auto manifest = synth_generate(spec, dir);
  const auto data = load_dataset(manifest, 3);
  EXPECT_EQ(data.size(), 192u);
  EXPECT_EQ(data.height, 32u);
  EXPECT_EQ(data.classes(), 3u);
  std::size_t ppm = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) ppm += e.path().extension() == ".ppm";
  EXPECT_EQ(ppm, 192u);
  const std::vector<std::size_t> idx = {0, 191};
  EXPECT_EQ(data.batch<float>(idx).shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(data.batch_labels(idx), (std::vector<int>{0, 2}));
}

TEST(Synth, DeterministicGivenSeed) {
  SyntheticSpec spec;
  spec.per_class = 5;
  const auto a = synth_samples(spec), b = synth_samples(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].image.pixels, b[i].image.pixels);
  spec.seed = 1;
  EXPECT_NE(synth_samples(spec)[0].image.pixels, a[0].image.pixels);
}

TEST(Synth, CenterBiasedPlacement) {
  SyntheticSpec spec;
  spec.noise = 0.0;
  const auto samples = synth_samples(spec);
  const double lo = 32.0 / 4.0, hi = 32.0 * 3.0 / 4.0;
  std::size_t central = 0;
  for (const auto& s : samples) {
    // centroid of the foreground pixels
    double sx = 0, sy = 0, n = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        if (s.image.pixels[(y * 32 + x) * 3] > 128) {
          sx += double(x);
          sy += double(y);
          n += 1;
        }
    ASSERT_GT(n, 0);
    const double cx = sx / n, cy = sy / n;
    central += cx >= lo && cx <= hi && cy >= lo && cy <= hi;
  }
  EXPECT_GE(static_cast<double>(central) / samples.size(), 0.9);
}

TEST(Synth, RejectsTooManyClasses) {
  SyntheticSpec spec;
  spec.classes = 50;
  EXPECT_THROW(synth_samples(spec), DataError);
  spec.classes = 3;
  spec.extent = 8;
  EXPECT_THROW(synth_samples(spec), DataError);
}
