#include <gtest/gtest.h>

#include "wavray/config.hpp"

using namespace wavray;

TEST(KeyValues, ParsesCommentsAndBlanks) {
  const auto kv = parse_key_values("# header\n\nrays = 3   # trailing\n  lr=0.002\n", "t");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("rays"), "3");
  EXPECT_EQ(kv.at("lr"), "0.002");
}

TEST(KeyValues, ErrorsNameTheLine) {
  try {
    parse_key_values("a = 1\nb = 2\na = 3\n", "cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_key_values("just words\n", "cfg"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 4\n", "cfg"), ConfigError);
}

TEST(RunConfig, ApplyRejectsUnknownAndMalformed) {
  RunConfig run;
  EXPECT_THROW(apply_key_values(run, {{"colour", "red"}}), ConfigError);
  EXPECT_THROW(apply_key_values(run, {{"rays", "-1"}}), ConfigError);
  EXPECT_THROW(apply_key_values(run, {{"lr", "fast"}}), ConfigError);
  EXPECT_THROW(apply_key_values(run, {{"precision", "float16"}}), ConfigError);
}

TEST(RunConfig, RoundTrip) {
  RunConfig run;
  run.model = ModelConfig::table1(2);
  run.train.lr = 1.0 / 3.0;
  run.train.precision = Precision::kFloat64;
  run.train.seed = 17;
  RunConfig back;
  apply_key_values(back, parse_key_values(format_key_values(to_key_values(run)), "rt"));
  EXPECT_EQ(to_key_values(back), to_key_values(run));
  EXPECT_EQ(back.train.lr, run.train.lr);
  EXPECT_EQ(back.model.backbone.refinement, run.model.backbone.refinement);
}

TEST(RunConfig, ShippedConfigsParse) {
  for (const char* name : {"desk.cfg", "table1.cfg"}) {
    RunConfig run;
    apply_key_values(run, read_key_values(std::filesystem::path(WAVRAY_CONFIGS) / name));
    EXPECT_NO_THROW(run.model.validate()) << name;
    EXPECT_NO_THROW(run.train.validate()) << name;
  }
  RunConfig desk;
  apply_key_values(desk, read_key_values(std::filesystem::path(WAVRAY_CONFIGS) / "desk.cfg"));
  EXPECT_EQ(to_key_values(desk.model), to_key_values(ModelConfig::desk(0)));
}

TEST(KeyValues, ModelKeysCoverModelConfig) {
  const auto kv = to_key_values(ModelConfig::desk(1));
  EXPECT_EQ(kv.size(), model_keys().size());
  for (const auto& k : model_keys()) EXPECT_TRUE(kv.count(k)) << k;
}
