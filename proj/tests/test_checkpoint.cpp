#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "wavray/checkpoint.hpp"
#include "wavray/workflow.hpp"

using namespace wavray;
using testing_support::scratch_dir;

namespace {

const Dataset& small_set() {
  static const Dataset data = [] {
    SyntheticSpec spec;
    spec.per_class = 4;
    return load_dataset(synth_generate(spec, scratch_dir("ckpt_small")), 3);
  }();
  return data;
}

RunConfig quick_run(std::size_t rays) {
  RunConfig run;
  run.model = ModelConfig::desk(rays);
  run.train.epochs = 2;
  run.train.batch = 4;
  run.train.seed = 5;
  run.train.checkpoint_every = 1;
  return run;
}

Checkpoint sample_checkpoint() {
  Trainer<float> trainer(ModelConfig::desk(1), quick_run(1).train);
  trainer.run_epoch(small_set());
  return snapshot(trainer);
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Checkpoint, ByteRoundTrip) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes, "rt")), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "WRNC");
}

TEST(Checkpoint, FlippedByteRejected) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t at : {bytes.size() / 2, bytes.size() - 20, std::size_t{12}}) {
    auto bad = bytes;
    bad[at] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(bad, "flip"), ChecksumError) << at;
  }
}

TEST(Checkpoint, VersionAndTruncation) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  auto newer = bytes;
  newer[4] = 2;
  EXPECT_THROW(decode_checkpoint(newer, "v2"), VersionError);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + bytes.size() / 2);
  EXPECT_THROW(decode_checkpoint(cut, "cut"), TruncationError);
  const std::vector<std::uint8_t> stub(bytes.begin(), bytes.begin() + 3);
  EXPECT_THROW(decode_checkpoint(stub, "stub"), TruncationError);
}

TEST(Checkpoint, MismatchListsFields) {
  const auto ckpt = sample_checkpoint();
  auto other = ModelConfig::desk(1);
  other.d_model = 48;
  other.classes = 3;
  Trainer<float> trainer(other, quick_run(1).train);
  try {
    restore(trainer, ckpt);
    FAIL();
  } catch (const ConfigMismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("d_model: 32 vs 48"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ResumeMatchesStraightRun) {
  const auto a = scratch_dir("ckpt_straight"), b = scratch_dir("ckpt_resumed");
  std::ostringstream log;
  const auto run = quick_run(3);
  train_run(run, small_set(), a, std::nullopt, log);
  ASSERT_TRUE(std::filesystem::exists(a / RunFiles::periodic(1)));
  EXPECT_FALSE(std::filesystem::exists(a / RunFiles::periodic(2)));
  const auto summary = train_run(run, small_set(), b, a / RunFiles::periodic(1), log);
  EXPECT_EQ(summary.first_epoch, 1u);
  EXPECT_EQ(summary.history.size(), 1u);
  EXPECT_EQ(read_file(a / RunFiles::kFinal), read_file(b / RunFiles::kFinal));
}

TEST(Workflow, RunDirectoryContents) {
  const auto dir = scratch_dir("ckpt_files");
  std::ostringstream log;
  const auto summary = train_run(quick_run(2), small_set(), dir, std::nullopt, log);
  EXPECT_EQ(summary.history.size(), 2u);
  for (const char* f : {RunFiles::kConfig, RunFiles::kMetrics, RunFiles::kOrigins, RunFiles::kFinal})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto metrics = read_text(dir / RunFiles::kMetrics);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), metrics_header());
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  const auto radii = mean_radius_by_epoch(dir / RunFiles::kOrigins);
  ASSERT_EQ(radii.size(), 3u);
  EXPECT_NEAR(radii[0].second, 1.0, 1e-6);
  const std::string progress = log.str();
  EXPECT_EQ(std::count(progress.begin(), progress.end(), '\n'), 2);
}

TEST(Workflow, EvalReproducesLoggedMetrics) {
  const auto dir = scratch_dir("ckpt_eval");
  std::ostringstream log;
  const auto summary = train_run(quick_run(1), small_set(), dir, std::nullopt, log);
  const auto r = eval_checkpoint(load_checkpoint(summary.final_checkpoint), small_set());
  const auto& last = summary.history.back();
  EXPECT_EQ(r.epoch, 2u);
  EXPECT_EQ(r.metrics.loss, last.loss);
  EXPECT_EQ(r.metrics.top1, last.top1);
  EXPECT_EQ(r.metrics.top5, last.top5);
  EXPECT_EQ(r.metrics.weighted_f1, last.weighted_f1);
  EXPECT_EQ(r.metrics.lr, last.lr);
}

TEST(Workflow, ExportMapsFromCheckpoint) {
  const auto dir = scratch_dir("ckpt_export");
  std::ostringstream log;
  auto run = quick_run(1);
  run.train.epochs = 1;
  const auto summary = train_run(run, small_set(), dir, std::nullopt, log);
  const auto ckpt = load_checkpoint(summary.final_checkpoint);
  const auto image = small_set().manifest.entries.front().path;
  EXPECT_EQ(export_maps(ckpt, image, dir / "maps"), 13u);
  EXPECT_TRUE(std::filesystem::exists(dir / "maps" / RunFiles::kOrigins));

  const auto plain = scratch_dir("ckpt_export_plain");
  auto none = quick_run(0);
  none.train.epochs = 1;
  const auto s0 = train_run(none, small_set(), plain, std::nullopt, log);
  EXPECT_THROW(export_maps(load_checkpoint(s0.final_checkpoint), image, plain / "maps"), ValueError);
}

TEST(Workflow, ExtentMismatchRejected) {
  auto run = quick_run(0);
  run.model.input = 64;
  std::ostringstream log;
  EXPECT_THROW(train_run(run, small_set(), scratch_dir("ckpt_extent"), std::nullopt, log), DataError);
}
