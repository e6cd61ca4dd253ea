#pragma once

#include <cmath>
#include <cstddef>

#include "grhd/autodiff/tensor.hpp"
#include "grhd/common/rng.hpp"

namespace grhd::ad {

// Kaiming-uniform for relu networks: U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace grhd::ad
