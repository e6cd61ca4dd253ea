#include "grhd/dataset/split.hpp"

#include <algorithm>
#include <cmath>

#include "grhd/common/error.hpp"
#include "grhd/common/rng.hpp"

namespace grhd::dataset {

namespace {

std::vector<std::size_t> subsample(std::vector<std::size_t> idx, double fraction, Rng& rng) {
  if (fraction >= 1.0) return idx;
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(keep, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

CorpusSplit split_corpus(std::span<const ClipMetadata> clips, const SplitPolicy& policy) {
  if (!(policy.train_fraction > 0.0 && policy.train_fraction <= 1.0) ||
      !(policy.test_fraction > 0.0 && policy.test_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "split fractions must be in (0, 1]");
  }
  CorpusSplit out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].split == Split::Train) {
      if (clips[i].condition == Condition::Anomaly) {
        throw Error(ErrorCode::ContractViolation, "anomalous clip in the training split (index " + clips[i].index + ")");
      }
      out.train.push_back(i);
    } else {
      out.test.push_back(i);
    }
  }
  Rng rng(policy.seed);
  out.train = subsample(std::move(out.train), policy.train_fraction, rng);
  out.test = subsample(std::move(out.test), policy.test_fraction, rng);
  if (out.train.empty()) throw Error(ErrorCode::EmptySplit, "no training clips");
  if (out.test.empty()) throw Error(ErrorCode::EmptySplit, "no test clips");
  return out;
}

}  // namespace grhd::dataset
