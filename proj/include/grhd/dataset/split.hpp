#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grhd/dataset/metadata.hpp"

namespace grhd::dataset {

struct SplitPolicy {
  double train_fraction = 1.0;  // subsampling for smoke tests, in (0, 1]
  double test_fraction = 1.0;
  std::uint64_t seed = 0;
};

// Indices into the input, each side in ascending order.
struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Honors the split field. Throws ContractViolation when a Train clip is
// labelled Anomaly and EmptySplit when either side ends up empty.
CorpusSplit split_corpus(std::span<const ClipMetadata> clips, const SplitPolicy& policy = {});

}  // namespace grhd::dataset
