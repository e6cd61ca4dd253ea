#include <gtest/gtest.h>

#include "grhd/dataset/metadata.hpp"
#include "grhd/dataset/synth.hpp"
#include "test_util.hpp"

using namespace grhd::dataset;

TEST(ParseClipMetadata, SourceTrainWithTwoAttributes) {
  const auto m = parse_clip_metadata("section_00_source_train_normal_0001_spd_28V_car_A1.wav");
  EXPECT_EQ(m.section_id, 0);
  EXPECT_EQ(m.domain, Domain::Source);
  EXPECT_EQ(m.split, Split::Train);
  EXPECT_EQ(m.condition, Condition::Normal);
  EXPECT_EQ(m.index, "0001");
  const std::vector<Attribute> want{{"spd", "28V"}, {"car", "A1"}};
  EXPECT_EQ(m.attributes, want);
}

TEST(ParseClipMetadata, TargetTestAnomaly) {
  const auto m = parse_clip_metadata("section_02_target_test_anomaly_0005_noise_1.wav");
  EXPECT_EQ(m.section_id, 2);
  EXPECT_EQ(m.domain, Domain::Target);
  EXPECT_EQ(m.split, Split::Test);
  EXPECT_EQ(m.condition, Condition::Anomaly);
  const std::vector<Attribute> want{{"noise", "1"}};
  EXPECT_EQ(m.attributes, want);
}

TEST(ParseClipMetadata, GarbageIsMalformed) {
  EXPECT_GRHD_ERROR(parse_clip_metadata("garbage.wav"), MalformedFilename);
  EXPECT_GRHD_ERROR(parse_clip_metadata("section_xx_source_train_normal_0001.wav"), MalformedFilename);
  EXPECT_GRHD_ERROR(parse_clip_metadata("section_00_elsewhere_train_normal_0001.wav"), MalformedFilename);
  EXPECT_GRHD_ERROR(parse_clip_metadata("section_00_source_valid_normal_0001.wav"), MalformedFilename);
  EXPECT_GRHD_ERROR(parse_clip_metadata("section_00_source_train_normal.wav"), MalformedFilename);
}

TEST(ParseClipMetadata, MissingConditionDependsOnSplit) {
  EXPECT_EQ(parse_clip_metadata("section_01_source_train_0003.wav").condition, Condition::Normal);
  EXPECT_EQ(parse_clip_metadata("section_01_source_test_0003.wav").condition, Condition::Unknown);
}

TEST(ParseClipMetadata, OddTailKeptVerbatim) {
  const auto m = parse_clip_metadata("section_00_source_train_normal_0001_spd_28V_lonely.wav");
  const std::vector<Attribute> want{{"raw", "spd_28V_lonely"}};
  EXPECT_EQ(m.attributes, want);
  EXPECT_EQ(format_clip_filename(m), "section_00_source_train_normal_0001_spd_28V_lonely.wav");
}

TEST(ParseClipMetadata, NoAttributes) {
  const auto m = parse_clip_metadata("section_03_target_test_normal_0042.wav");
  EXPECT_TRUE(m.attributes.empty());
  EXPECT_EQ(canonical_attribute_key(m.attributes), kNoAttrKey);
}

TEST(ParseClipMetadata, DirectoryPrefixIgnored) {
  const auto a = parse_clip_metadata("ToyCar/train/section_00_source_train_normal_0001_spd_28V.wav");
  const auto b = parse_clip_metadata("section_00_source_train_normal_0001_spd_28V.wav");
  EXPECT_EQ(a, b);
}

TEST(ParseClipMetadata, RoundTripOverSynthesizedCorpus) {
  SynthConfig c;
  c.sections = 3;
  c.source_count = 12;
  c.target_count = 3;
  c.test_normal_count = 4;
  c.test_anomaly_count = 4;
  const auto corpus = synth_generate(c);
  ASSERT_FALSE(corpus.entries().empty());
  for (const auto& e : corpus.entries()) {
    auto m = e.metadata;
    m.machine_type.clear();
    EXPECT_EQ(parse_clip_metadata(format_clip_filename(m)), m) << format_clip_filename(m);
  }
}

TEST(CanonicalAttributeKey, OrderIndependent) {
  const std::vector<Attribute> a{{"spd", "28V"}, {"car", "A1"}};
  const std::vector<Attribute> b{{"car", "A1"}, {"spd", "28V"}};
  EXPECT_EQ(canonical_attribute_key(a), canonical_attribute_key(b));
  EXPECT_EQ(canonical_attribute_key(a), "car=A1;spd=28V");
}
