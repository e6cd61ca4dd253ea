#include <gtest/gtest.h>

#include "grhd/dataset/split.hpp"
#include "test_util.hpp"

using namespace grhd::dataset;

namespace {

std::vector<ClipMetadata> corpus(int train, int test) {
  std::vector<ClipMetadata> out;
  for (int i = 0; i < train + test; ++i) {
    ClipMetadata m;
    m.split = i < train ? Split::Train : Split::Test;
    m.condition = (i >= train && i % 2) ? Condition::Anomaly : Condition::Normal;
    m.index = std::to_string(i);
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(SplitCorpus, HonorsSplitField) {
  const auto clips = corpus(10, 4);
  const auto s = split_corpus(clips);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_EQ(s.test.size(), 4u);
  for (const auto i : s.train) EXPECT_EQ(clips[i].split, Split::Train);
  for (const auto i : s.test) EXPECT_EQ(clips[i].split, Split::Test);
}

TEST(SplitCorpus, AnomalyInTrainIsContractViolation) {
  auto clips = corpus(10, 4);
  clips[3].condition = Condition::Anomaly;
  EXPECT_GRHD_ERROR(split_corpus(clips), ContractViolation);
}

TEST(SplitCorpus, SubsampleIsDeterministic) {
  const auto clips = corpus(40, 20);
  const SplitPolicy half{0.5, 0.5, 99};
  const auto a = split_corpus(clips, half);
  const auto b = split_corpus(clips, half);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.size(), 20u);
  EXPECT_EQ(a.test.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  const auto c = split_corpus(clips, SplitPolicy{0.5, 0.5, 100});
  EXPECT_NE(a.train, c.train);
}

TEST(SplitCorpus, EmptySideIsError) {
  EXPECT_GRHD_ERROR(split_corpus(corpus(5, 0)), EmptySplit);
  EXPECT_GRHD_ERROR(split_corpus(corpus(0, 5)), EmptySplit);
  EXPECT_GRHD_ERROR(split_corpus(corpus(5, 5), SplitPolicy{0.0, 1.0, 0}), InvalidConfig);
}
