#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "wavray/backbone.hpp"
#include "wavray/wavelet.hpp"

using namespace wavray;
using testing_support::max_rel_diff;
using testing_support::random_tensor;
using testing_support::separable_reference;

namespace {

WaveFilterPair<double> random_filters(Rng& rng) {
  auto f = WaveFilterPair<double>::init();
  for (auto* t : {&f.low, &f.high})
    for (double& v : t->mutable_data()) v += 0.2 * rng.normal();
  return f;
}

}  // namespace

TEST(WaveFilterPair, Initialization) {
  const auto f = WaveFilterPair<double>::init();
  ASSERT_EQ(f.low.numel(), 3u);
  ASSERT_EQ(f.high.numel(), 5u);
  for (double v : f.low.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_NEAR(std::accumulate(f.high.data().begin(), f.high.data().end(), 0.0), 0.0, 1e-15);
  EXPECT_TRUE(f.low.requires_grad());
  EXPECT_TRUE(f.high.requires_grad());
}

TEST(WaveDecompose, ConstantInputOnlyInLowBand) {
  const auto f = WaveFilterPair<double>::init();
  for (std::size_t stride : {1, 2}) {
    const auto bands = wave_decompose(Tensor<double>::full(Shape{1, 3, 8, 8}, 0.8), f, stride);
    for (double v : bands.ll.data()) EXPECT_NEAR(v, 0.8, 1e-12);
    for (const auto* t : {&bands.lh, &bands.hl, &bands.hh})
      for (double v : t->data()) EXPECT_NEAR(v, 0.0, 1e-6);
  }
}

TEST(WaveDecompose, StrideTwoHalves) {
  Rng rng(1);
  const auto bands = wave_decompose(random_tensor({2, 3, 16, 16}, rng), WaveFilterPair<double>::init(), 2);
  for (const auto& b : bands.list()) EXPECT_EQ(b.shape(), (Shape{2, 3, 8, 8}));
  const auto same = wave_decompose(random_tensor({1, 2, 6, 10}, rng), WaveFilterPair<double>::init(), 1);
  for (const auto& b : same.list()) EXPECT_EQ(b.shape(), (Shape{1, 2, 6, 10}));
}

TEST(WaveDecompose, MatchesSeparableReference) {
  Rng rng(2);
  for (std::size_t stride : {1, 2}) {
    const auto x = random_tensor({1, 2, 8, 8}, rng);
    const auto f = random_filters(rng);
    const auto bands = wave_decompose(x, f, stride);
    const auto lo = f.low.data(), hi = f.high.data();
    EXPECT_LT(max_rel_diff(bands.ll.data(), separable_reference(x, lo, lo, stride)), 1e-6);
    EXPECT_LT(max_rel_diff(bands.lh.data(), separable_reference(x, lo, hi, stride)), 1e-6);
    EXPECT_LT(max_rel_diff(bands.hl.data(), separable_reference(x, hi, lo, stride)), 1e-6);
    EXPECT_LT(max_rel_diff(bands.hh.data(), separable_reference(x, hi, hi, stride)), 1e-6);
  }
}

TEST(WaveDecompose, OddExtentRejectedAtStrideTwo) {
  EXPECT_THROW(wave_decompose(Tensor<double>::zeros(Shape{1, 1, 7, 8}), WaveFilterPair<double>::init(), 2),
               ShapeError);
}

TEST(Stem, StrideArithmetic) {
  Rng rng(3);
  const Stem<float> stem(32, rng);
  EXPECT_EQ(stem.forward(Tensor<float>::zeros(Shape{1, 3, 224, 224})).shape(), (Shape{1, 32, 112, 112}));
  EXPECT_EQ(stem.forward(Tensor<float>::zeros(Shape{2, 3, 32, 32})).shape(), (Shape{2, 32, 16, 16}));
  EXPECT_THROW(stem.forward(Tensor<float>::zeros(Shape{1, 3, 12, 12})), ShapeError);
  EXPECT_THROW(stem.forward(Tensor<float>::zeros(Shape{1, 3, 15, 16})), ShapeError);
}

TEST(ExtractStage, ExtractionSchedule) {
  Rng rng(4);
  const ExtractStage<float> first(32, 48, rng);
  const ExtractStage<float> second(48, 64, rng);
  const auto a = first.forward(Tensor<float>::zeros(Shape{1, 32, 112, 112}));
  EXPECT_EQ(a.shape(), (Shape{1, 48, 56, 56}));
  EXPECT_EQ(second.forward(a).shape(), (Shape{1, 64, 28, 28}));
}

TEST(ModulationBlock, OnesAttentionLeavesResidualPointwiseMap) {
  Rng rng(5);
  const ModulationBlock<double> block(8, 4, rng);
  const auto f = random_tensor({2, 8, 4, 4}, rng);
  const auto ones = Tensor<double>::ones(f.shape());
  const auto got = block.forward(f, &ones);
  const auto want = add(f, block.output_projection()(block.value(block.norm()(f))));
  EXPECT_LT(max_rel_diff(got.data(), want.data()), 1e-12);
}

TEST(ModulationBlock, PreservesShape) {
  Rng rng(6);
  const ModulationBlock<float> block(64, 4, rng);
  EXPECT_EQ(block.forward(Tensor<float>::ones(Shape{1, 64, 28, 28})).shape(), (Shape{1, 64, 28, 28}));
}

TEST(ModulationBlock, RejectsIndivisibleChannels) {
  Rng rng(7);
  EXPECT_THROW(ModulationBlock<float>(6, 4, rng), ShapeError);
  EXPECT_THROW(ModulationBlock<float>(8, 2, rng), ValueError);
}

TEST(ModulationBlock, BothRoundsReadOneFilterPair) {
  Rng rng(8);
  ModulationBlock<double> block(8, 4, rng);
  ParamList<double> params;
  block.collect(params, "b");
  std::size_t low = 0, high = 0;
  for (const auto& p : params) {
    if (p.name.ends_with(".low")) {
      ++low;
      EXPECT_EQ(p.tensor.impl(), block.filters().low.impl());
    }
    if (p.name.ends_with(".high")) ++high;
  }
  EXPECT_EQ(low, 1u);
  EXPECT_EQ(high, 1u);

  const auto f = random_tensor({1, 8, 4, 4}, rng);
  const auto before = block.attention(block.norm()(f)).to_vector();
  block.filters().low.mutable_data()[0] += 0.5;
  const auto after = block.attention(block.norm()(f)).to_vector();
  EXPECT_NE(before, after);
}

TEST(WavePool, ConstantInputFusesToLowPair) {
  Rng rng(9);
  const WavePool<double> pool(4, 8, 2, rng);
  const auto fused = pool.fuse(Tensor<double>::full(Shape{1, 4, 8, 8}, -0.6));
  ASSERT_EQ(fused.shape(), (Shape{1, 8, 4, 4}));
  for (std::size_t i = 0; i < 4 * 16; ++i) EXPECT_NEAR(fused[i], -0.6, 1e-12);
  for (std::size_t i = 4 * 16; i < 8 * 16; ++i) EXPECT_NEAR(fused[i], 0.0, 1e-6);
}

TEST(WavePool, MatchesBandSumReference) {
  Rng rng(10);
  const WavePool<double> pool(2, 4, 2, rng);
  const auto x = random_tensor({1, 2, 8, 8}, rng);
  const auto lo = WaveFilterPair<double>::init().low.to_vector();
  const auto hi = WaveFilterPair<double>::init().high.to_vector();
  const auto ll = separable_reference(x, lo, lo, 2), lh = separable_reference(x, lo, hi, 2);
  const auto hl = separable_reference(x, hi, lo, 2), hh = separable_reference(x, hi, hi, 2);
  std::vector<double> want(2 * ll.size());
  for (std::size_t i = 0; i < ll.size(); ++i) {
    want[i] = ll[i] + hh[i];
    want[ll.size() + i] = lh[i] + hl[i];
  }
  EXPECT_LT(max_rel_diff(pool.fuse(x).data(), want), 1e-6);
}

TEST(WavePool, RefinementTransition) {
  Rng rng(11);
  const WavePool<float> pool(64, 512, 2, rng);
  EXPECT_EQ(pool.forward(Tensor<float>::ones(Shape{1, 64, 28, 28})).shape(), (Shape{1, 512, 14, 14}));
  EXPECT_THROW(pool.forward(Tensor<float>::ones(Shape{1, 64, 7, 7})), ShapeError);
}

TEST(Backbone, DeskShapes) {
  Rng rng(12);
  const Backbone<float> backbone(BackboneConfig::desk(), {0, 0}, rng);
  const auto pyramid = backbone.forward(Tensor<float>::zeros(Shape{2, 3, 32, 32}));
  EXPECT_EQ(pyramid.extraction.shape(), (Shape{2, 16, 4, 4}));
  ASSERT_EQ(pyramid.stages.size(), 2u);
  EXPECT_EQ(pyramid.stages[0].second.shape(), (Shape{2, 32, 4, 4}));
  EXPECT_EQ(pyramid.deepest().shape(), (Shape{2, 64, 2, 2}));
}

TEST(Backbone, RejectsIncompatibleInput) {
  const auto desk = BackboneConfig::desk();
  EXPECT_EQ(desk.reduction(), 16u);
  EXPECT_THROW(desk.validate_input(8, 8), ShapeError);
  EXPECT_THROW(desk.validate_input(20, 32), ShapeError);
  EXPECT_NO_THROW(desk.validate_input(16, 16));
}

TEST(Backbone, DeterministicGivenSeed) {
  auto run = [] {
    Rng rng(13);
    const Backbone<float> backbone(BackboneConfig::desk(), {1, 1}, rng);
    Rng data(99);
    return backbone.forward(random_tensor<float>({1, 3, 32, 32}, data)).deepest().to_vector();
  };
  EXPECT_EQ(run(), run());
}
